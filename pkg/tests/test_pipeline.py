import random

import pytest

from corpus import (gen_permanent_stuckat_scenario, gen_program,
                    gen_transient_scenario, trace_run)
from ifrsim.faults import (Delay, FaultScenario, FaultSite, FaultUnit, PERMANENT,
                           StuckAt, TimedFault, TransientFlip)
from ifrsim.hw import Copy, PowerState, StageKind
from ifrsim.isa import assemble
from ifrsim.pipeline import (ControllerActions, ControllerMode, ControllerState,
                             CoreConfig, Outcome, controller_step,
                             controller_output_vector, matches_reference,
                             run_core)

CFG = CoreConfig()
_MAIN = Copy.MAIN


def _site(stage, copy=_MAIN):
    return FaultSite(FaultUnit(stage.value), copy)


def _alternating_program(pairs=40):
    lines = []
    for i in range(pairs):
        lines.append(f"LDI r1, {i % 2}")
        lines.append("ADD r2, r1, r1")
    lines.append("HALT")
    return assemble("\n".join(lines))


# ---------------------------------------------------------------------------
# Controller FSM
# ---------------------------------------------------------------------------

def test_monitor_idle_is_identity():
    state = ControllerState()
    new, actions = controller_step(state, {}, False, CFG)
    assert new.mode is ControllerMode.MONITOR
    assert actions == ControllerActions()


def test_threshold_crossing_schedules_flush_and_power_off():
    counters = tuple(CFG.permanent_threshold - 1 if s is StageKind.DECODE else 0
                     for s in (StageKind.PREDECODE, StageKind.DECODE, StageKind.EXECUTE))
    state = ControllerState(mode=ControllerMode.SUSPECT, suspect_stage=StageKind.DECODE,
                            error_counters=counters)
    new, actions = controller_step(state, {StageKind.DECODE: 0b0001}, False, CFG)
    assert new.mode is ControllerMode.FLUSH
    assert new.remaining == CFG.flush_cycles
    assert actions.flush
    assert actions.power_off == ((StageKind.DECODE, Copy.MAIN),)
    assert actions.classified is StageKind.DECODE


def test_trc_error_is_fail_stop():
    new, actions = controller_step(ControllerState(), {}, True, CFG)
    assert new.mode is ControllerMode.DEAD and actions.dead


def test_dead_is_absorbing():
    with pytest.raises(ValueError):
        controller_step(ControllerState(mode=ControllerMode.DEAD), {}, False, CFG)


def test_error_clearing_classifies_transient():
    state = ControllerState(mode=ControllerMode.SUSPECT, suspect_stage=StageKind.EXECUTE,
                            error_counters=(0, 0, 5))
    new, actions = controller_step(state, {}, False, CFG)
    assert new.mode is ControllerMode.MONITOR
    assert new.error_counters == (0, 0, 0)
    assert actions.transient_clear == (StageKind.EXECUTE, 5)


def test_counters_never_exceed_threshold():
    state = ControllerState()
    for _ in range(CFG.permanent_threshold):
        assert all(c <= CFG.permanent_threshold for c in state.error_counters)
        state, actions = controller_step(state, {StageKind.EXECUTE: 1}, False, CFG)
    assert state.mode is ControllerMode.FLUSH  # classified exactly at threshold


def test_spare_failure_after_swap_is_dead():
    counters = (0, CFG.permanent_threshold - 1, 0)
    state = ControllerState(mode=ControllerMode.SUSPECT, suspect_stage=StageKind.DECODE,
                            error_counters=counters,
                            on_spare=frozenset({StageKind.DECODE}))
    new, actions = controller_step(state, {StageKind.DECODE: 1}, False, CFG)
    assert new.mode is ControllerMode.DEAD and actions.dead


def test_flush_then_powerswap_then_resume_timing():
    state = ControllerState(mode=ControllerMode.FLUSH, swap_stage=StageKind.DECODE,
                            remaining=CFG.flush_cycles)
    power_on_at = resume_at = None
    for step in range(1, CFG.flush_cycles + CFG.powerup_cycles_per_block + 1):
        state, actions = controller_step(state, {}, False, CFG)
        if actions.power_on:
            power_on_at = step
            assert actions.power_on == ((StageKind.DECODE, Copy.SPARE),)
        if actions.replay:
            resume_at = step
            assert actions.switch_flip == (StageKind.DECODE,)
    assert power_on_at == CFG.flush_cycles
    assert resume_at == CFG.flush_cycles + CFG.powerup_cycles_per_block
    assert state.mode is ControllerMode.RESUME
    assert StageKind.DECODE in state.on_spare


def test_output_vector_is_16_bits_and_distinguishes_actions():
    idle = controller_output_vector(ControllerState(), ControllerActions())
    busy = controller_output_vector(
        ControllerState(mode=ControllerMode.FLUSH, swap_stage=StageKind.DECODE,
                        remaining=3),
        ControllerActions(flush=True, power_off=((StageKind.DECODE, Copy.MAIN),)))
    assert 0 <= idle < (1 << 16) and 0 <= busy < (1 << 16)
    assert idle != busy


# ---------------------------------------------------------------------------
# Whole-core runs
# ---------------------------------------------------------------------------

def test_fault_free_run_completes_golden():
    program = assemble("LDI r1, 7\nHALT")
    report = run_core(program, CFG, FaultScenario())
    assert report.outcome is Outcome.COMPLETED
    assert report.final_state.regs[1] == 7
    assert report.events == []
    assert matches_reference(report, program)


def test_permanent_decode_stuckat_recovers_within_band():
    program = _alternating_program()
    scenario = FaultScenario((TimedFault(StuckAt(3, 1), _site(StageKind.DECODE),
                                         10, PERMANENT),))
    report = run_core(program, CFG, scenario)
    assert report.outcome is Outcome.COMPLETED
    assert matches_reference(report, program)
    assert len(report.permanent_events) == 1
    event = report.permanent_events[0]
    assert 82 <= event.recovery_cycles <= 151
    assert 0.5 <= CFG.cycles_to_us(event.recovery_cycles) <= 2.0


def test_single_cycle_transient_no_swap():
    program = _alternating_program()
    scenario = FaultScenario((TimedFault(TransientFlip(4), _site(StageKind.EXECUTE),
                                         12, 1),))
    report = run_core(program, CFG, scenario)
    assert report.outcome is Outcome.COMPLETED
    assert matches_reference(report, program)
    assert report.permanent_events == []
    assert [e.classified for e in report.events] == ["transient"]


def test_recovery_accounting_identity():
    program = _alternating_program()
    scenario = FaultScenario((TimedFault(StuckAt(0, 1), _site(StageKind.EXECUTE),
                                         9, PERMANENT),))
    report = run_core(program, CFG, scenario)
    event = report.permanent_events[0]
    assert event.counting_cycles == CFG.permanent_threshold
    assert event.flush_cycles == CFG.flush_cycles
    assert event.powerup_cycles == CFG.powerup_cycles_per_block
    # detect is the first counted error cycle, so threshold-1 cycles remain.
    assert event.recovery_cycles == ((event.counting_cycles - 1) + event.flush_cycles
                                     + event.powerup_cycles + event.refill_cycles)
    assert event.swap_complete_cycle > event.detect_cycle


def test_single_copy_on_after_recovery():
    program = _alternating_program()
    scenario = FaultScenario((TimedFault(StuckAt(3, 1), _site(StageKind.DECODE),
                                         10, PERMANENT),))
    report = run_core(program, CFG, scenario)
    assert report.final_power[(StageKind.DECODE, Copy.MAIN)] is PowerState.OFF
    assert report.final_power[(StageKind.DECODE, Copy.SPARE)] is PowerState.ON
    for kind in StageKind:
        on = sum(report.final_power[(kind, copy)] is PowerState.ON for copy in Copy)
        assert on == 1


def test_stress_ledger_matches_event_log():
    program = _alternating_program()
    scenario = FaultScenario((TimedFault(StuckAt(3, 1), _site(StageKind.DECODE),
                                         10, PERMANENT),))
    report = run_core(program, CFG, scenario)
    event = report.permanent_events[0]
    total = report.total_cycles
    report.stress.assert_conserved(total)

    spare = report.stress.blocks[(StageKind.DECODE, Copy.SPARE)]
    main = report.stress.blocks[(StageKind.DECODE, Copy.MAIN)]
    # Recomputed from the event log: the spare sat unpowered until the flush
    # completed, spent the configured cycles powering, and ran from then on.
    powering_start = event.end_cycle + event.flush_cycles + 1
    assert spare.off_cycles == powering_start
    assert spare.powering_cycles == CFG.powerup_cycles_per_block
    assert spare.on_cycles == total - powering_start - CFG.powerup_cycles_per_block
    # The faulty main was on through the classification cycle, then gated off.
    assert main.on_cycles == event.end_cycle + 1
    assert main.off_cycles == total - event.end_cycle - 1


def test_delay_fault_classified_permanent():
    program = _alternating_program()
    scenario = FaultScenario((TimedFault(Delay(1), _site(StageKind.EXECUTE),
                                         12, PERMANENT),))
    report = run_core(program, CFG, scenario)
    assert report.outcome is Outcome.COMPLETED
    assert matches_reference(report, program)
    assert [e.classified for e in report.events] == ["permanent"]


def test_delay_with_deeper_lag_classified_permanent():
    program = _alternating_program()
    scenario = FaultScenario((TimedFault(Delay(2), _site(StageKind.EXECUTE),
                                         14, PERMANENT),))
    report = run_core(program, CFG, scenario)
    assert report.outcome is Outcome.COMPLETED
    assert matches_reference(report, program)
    assert [e.classified for e in report.events] == ["permanent"]


def test_fault_on_cold_spare_is_inert():
    program = _alternating_program()
    scenario = FaultScenario((TimedFault(StuckAt(3, 1),
                                         _site(StageKind.DECODE, Copy.SPARE),
                                         0, PERMANENT),))
    report = run_core(program, CFG, scenario)
    assert report.outcome is Outcome.COMPLETED
    assert report.events == []
    assert matches_reference(report, program)


def test_nonzero_origin_program_runs_golden():
    source = "LDI r1, 3\nADD r2, r1, r1\nBEQ r0, r0, 2\nLDI r3, 9\nJMP 105\nHALT"
    program = assemble(source, origin=100)
    report = run_core(program, CFG, FaultScenario())
    assert report.outcome is Outcome.COMPLETED
    assert matches_reference(report, program)
    assert report.final_state.regs[2] == 6
    assert report.final_state.regs[3] == 0  # skipped by the taken branch


def test_detection_completeness_exposed_stuckat_always_permanent():
    program = _alternating_program()
    for stage in StageKind:
        for bit, value in ((0, 1), (7, 1), (33, 1)):
            scenario = FaultScenario((TimedFault(StuckAt(bit, value), _site(stage),
                                                 8, PERMANENT),))
            report = run_core(program, CFG, scenario)
            assert len(report.permanent_events) == 1, (stage, bit)
            assert report.outcome is Outcome.COMPLETED
            assert matches_reference(report, program)


def test_controller_rail_fault_is_fail_stop():
    program = _alternating_program()
    scenario = FaultScenario((TimedFault(StuckAt(0, 1),
                                         FaultSite(FaultUnit.CONTROLLER, Copy.MAIN),
                                         5, PERMANENT),))
    report = run_core(program, CFG, scenario)
    assert report.outcome is Outcome.DEAD


def test_spare_failure_exhausts_redundancy():
    program = _alternating_program()
    scenario = FaultScenario((
        TimedFault(StuckAt(3, 1), _site(StageKind.DECODE), 0, PERMANENT),
        TimedFault(StuckAt(4, 1), _site(StageKind.DECODE, Copy.SPARE), 0, PERMANENT),
    ))
    report = run_core(program, CFG, scenario)
    assert report.outcome is Outcome.DEAD
    assert len(report.permanent_events) >= 1


def test_two_stage_faults_recover_sequentially():
    program = _alternating_program(60)
    scenario = FaultScenario((
        TimedFault(StuckAt(3, 1), _site(StageKind.DECODE), 10, PERMANENT),
        TimedFault(StuckAt(5, 1), _site(StageKind.EXECUTE), 12, PERMANENT),
    ))
    report = run_core(program, CFG, scenario)
    assert report.outcome is Outcome.COMPLETED
    assert matches_reference(report, program)
    stages = sorted(e.stage.value for e in report.permanent_events)
    assert stages == ["decode", "execute"]
    for event in report.permanent_events:
        # Even when a second fault interrupts a refill, every permanent event
        # eventually records the commit that restored normal operation.
        assert event.swap_complete_cycle is not None
        assert event.swap_complete_cycle > event.detect_cycle
        assert event.recovery_cycles == ((event.counting_cycles - 1) + event.flush_cycles
                                         + event.powerup_cycles + event.refill_cycles)


def test_parity_blind_double_flip_corrupts_silently():
    # Two simultaneous flips within one byte evade parity; the corrupted
    # result commits and the run completes with a golden mismatch. This is
    # the documented limitation of single-parity protection.
    program = assemble("LDI r1, 4\nNOP\nNOP\nHALT")
    scenario = FaultScenario((
        TimedFault(TransientFlip(0), _site(StageKind.EXECUTE), 2, 1),
        TimedFault(TransientFlip(1), _site(StageKind.EXECUTE), 2, 1),
    ))
    report = run_core(program, CFG, scenario)
    assert report.outcome is Outcome.COMPLETED
    assert report.events == []  # nothing was detected
    assert not matches_reference(report, program)


def test_exhaustion_on_infinite_loop():
    program = assemble("JMP 0")
    report = run_core(program, CFG, FaultScenario(), max_cycles=500)
    assert report.outcome is Outcome.EXHAUSTED
    assert report.total_cycles == 500


def test_program_without_halt_exhausts():
    program = assemble("NOP\nNOP")
    report = run_core(program, CFG, FaultScenario(), max_cycles=500)
    assert report.outcome is Outcome.EXHAUSTED
    assert report.total_cycles < 500


def test_run_is_deterministic():
    program = _alternating_program()
    scenario = FaultScenario((TimedFault(StuckAt(3, 1), _site(StageKind.DECODE),
                                         10, PERMANENT),))
    a = run_core(program, CFG, scenario)
    b = run_core(program, CFG, scenario)
    assert a.final_state == b.final_state
    assert a.total_cycles == b.total_cycles
    assert [(e.detect_cycle, e.swap_complete_cycle) for e in a.events] == \
           [(e.detect_cycle, e.swap_complete_cycle) for e in b.events]


def test_branches_and_memory_against_reference():
    source = """
    LDI r1, 5
    LDI r2, 5
    LDI r4, 64
    BEQ r1, r2, 2     ; taken, skips the next instruction
    LDI r3, 111
    ST r1, r4, 2
    LD r5, r4, 2
    SUB r6, r5, r1
    BEQ r6, r0, 2     ; taken, skips the next instruction
    LDI r7, 222
    JMP 11
    HALT
    """
    program = assemble(source)
    report = run_core(program, CFG, FaultScenario())
    assert report.outcome is Outcome.COMPLETED
    assert matches_reference(report, program)
    assert report.final_state.regs[3] == 0
    assert report.final_state.regs[5] == 5
    assert report.final_state.regs[7] == 0


def test_golden_equivalence_randomized_corpus():
    # Every completed run equals the reference, across 100 programs and 20
    # scenarios each (transient mixes plus guaranteed-exposure stuck-ats).
    rng = random.Random(0xC0DE)
    for _ in range(100):
        program = gen_program(rng)
        base = trace_run(program, CFG)
        assert base.outcome is Outcome.COMPLETED
        assert matches_reference(base, program)
        for s in range(20):
            if s % 2 == 0:
                scenario = gen_transient_scenario(rng, base.total_cycles,
                                                  CFG.permanent_threshold)
            else:
                scenario = gen_permanent_stuckat_scenario(rng, base.bus_trace)
            report = run_core(program, CFG, scenario)
            assert report.outcome is Outcome.COMPLETED
            assert matches_reference(report, program), scenario
            report.stress.assert_conserved(report.total_cycles)
