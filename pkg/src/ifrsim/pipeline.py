"""Cycle-level model of the repairable 3-stage core.

Every pipeline stage exists twice (main plus cold spare); the active copy
drives a 36-bit parity-protected bus through a 2-way switch box into the next
pipeline register. A duplicated, two-rail-checked controller watches the
per-stage parity masks each cycle:

* an error freezes the pipeline so nothing corrupted can commit and the
  stage re-presents the same value while an adjustable counter runs;
* errors that clear before the counter reaches the permanent threshold are
  classified transient and execution simply resumes;
* errors that persist are classified permanent: the pipeline is flushed, the
  faulty copy is power-gated, the spare is powered up (one block per power-up
  step to bound in-rush current), the boundary switch flips, and execution
  replays from the oldest uncommitted instruction;
* a two-rail mismatch between the controller copies, or a permanent fault on
  a stage already running on its spare, is fail-stop (Dead).

When a run completes, its architectural state must equal the reference
interpreter's, which is the checked contract of this module.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace

from .faults import (CONTROLLER_VEC_BITS, FaultScenario, FaultUnit, TimedFault,
                     Delay, StressLedger, apply_faults, apply_vector_faults,
                     update_stress)
from .hw import (Copy, InterStageBus, PIPELINE_ORDER, PowerState, StageKind,
                 encode_bus, parity_check, switch_route, trc_compare)
from .isa import (ArchState, Instruction, Opcode, Program, WORD_MASK,
                  decode_word, dst_reg, encode_instruction, execute_result,
                  run_reference, src_regs)

DEFAULT_MAX_CYCLES = 100_000
PIPELINE_DEPTH = 3
_CONTROL_OPS = (Opcode.BEQ, Opcode.JMP, Opcode.HALT)


@dataclass(frozen=True)
class CoreConfig:
    clock_hz: float = 1.0e8
    permanent_threshold: int = 16
    flush_cycles: int = 3
    powerup_cycles_per_block: int = 64
    rng_seed: int = 0

    def __post_init__(self):
        if self.clock_hz <= 0:
            raise ValueError("clock_hz must be positive")
        for name in ("permanent_threshold", "flush_cycles", "powerup_cycles_per_block"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def cycles_to_us(self, cycles: int) -> float:
        return cycles / self.clock_hz * 1e6


@dataclass
class BlockInstance:
    kind: StageKind
    copy: Copy
    power: PowerState


class ControllerMode(enum.Enum):
    MONITOR = 0
    SUSPECT = 1
    FLUSH = 2
    POWER_SWAP = 3
    RESUME = 4
    DEAD = 5


@dataclass(frozen=True)
class ControllerState:
    mode: ControllerMode = ControllerMode.MONITOR
    suspect_stage: StageKind | None = None
    swap_stage: StageKind | None = None
    remaining: int = 0
    error_counters: tuple[int, int, int] = (0, 0, 0)
    replay_pc: int = 0
    on_spare: frozenset = frozenset()

    def counter(self, stage: StageKind) -> int:
        return self.error_counters[PIPELINE_ORDER.index(stage)]


@dataclass(frozen=True)
class ControllerActions:
    flush: bool = False
    power_off: tuple = ()
    power_on: tuple = ()
    switch_flip: tuple = ()
    replay: bool = False
    classified: StageKind | None = None
    transient_clear: tuple | None = None  # (stage, consecutive error cycles)
    dead: bool = False


_NO_ACTIONS = ControllerActions()


def controller_step(state: ControllerState, parity_errors, trc_error: bool,
                    config: CoreConfig) -> tuple[ControllerState, ControllerActions]:
    """One combinational step of the repair controller.

    `parity_errors` maps each stage to its 4-bit parity error mask. Returns
    the next state plus the action strobes the surrounding logic must obey.
    """
    if state.mode is ControllerMode.DEAD:
        raise ValueError("controller is dead; Dead is absorbing")
    if trc_error:
        return replace(state, mode=ControllerMode.DEAD), ControllerActions(dead=True)

    mode = state.mode
    if mode is ControllerMode.FLUSH:
        remaining = state.remaining - 1
        if remaining > 0:
            return replace(state, remaining=remaining), _NO_ACTIONS
        new = replace(state, mode=ControllerMode.POWER_SWAP,
                      remaining=config.powerup_cycles_per_block)
        return new, ControllerActions(power_on=((state.swap_stage, Copy.SPARE),))

    if mode is ControllerMode.POWER_SWAP:
        remaining = state.remaining - 1
        if remaining > 0:
            return replace(state, remaining=remaining), _NO_ACTIONS
        new = replace(state, mode=ControllerMode.RESUME, remaining=0,
                      on_spare=state.on_spare | {state.swap_stage})
        return new, ControllerActions(switch_flip=(state.swap_stage,), replay=True)

    # MONITOR / SUSPECT / RESUME watch the parity masks.
    erroring = [s for s in PIPELINE_ORDER if parity_errors.get(s, 0)]
    if not erroring:
        if mode is ControllerMode.SUSPECT:
            run_length = state.counter(state.suspect_stage)
            new = replace(state, mode=ControllerMode.MONITOR, suspect_stage=None,
                          error_counters=(0, 0, 0))
            return new, ControllerActions(transient_clear=(state.suspect_stage, run_length))
        if mode is ControllerMode.RESUME:
            return replace(state, mode=ControllerMode.MONITOR), _NO_ACTIONS
        return state, _NO_ACTIONS

    counters = tuple(state.error_counters[i] + 1 if stage in erroring else 0
                     for i, stage in enumerate(PIPELINE_ORDER))
    classified = next((s for s in PIPELINE_ORDER
                       if counters[PIPELINE_ORDER.index(s)] >= config.permanent_threshold),
                      None)
    if classified is not None:
        if classified in state.on_spare:
            # The spare itself has failed permanently: nothing left to swap in.
            return replace(state, mode=ControllerMode.DEAD), ControllerActions(dead=True)
        new = replace(state, mode=ControllerMode.FLUSH, suspect_stage=None,
                      swap_stage=classified, remaining=config.flush_cycles,
                      error_counters=(0, 0, 0))
        faulty_copy = Copy.SPARE if classified in state.on_spare else Copy.MAIN
        return new, ControllerActions(flush=True, power_off=((classified, faulty_copy),),
                                      classified=classified)

    peak = max(counters[PIPELINE_ORDER.index(s)] for s in erroring)
    focal = next(s for s in erroring if counters[PIPELINE_ORDER.index(s)] == peak)
    new = replace(state, mode=ControllerMode.SUSPECT, suspect_stage=focal,
                  error_counters=counters)
    return new, _NO_ACTIONS


_MODE_CODE = {mode: i for i, mode in enumerate(ControllerMode)}
_STAGE_CODE = {stage: i + 1 for i, stage in enumerate(PIPELINE_ORDER)}


def controller_output_vector(state: ControllerState, actions: ControllerActions) -> int:
    """Pack the controller's observable outputs into a 16-bit vector.

    Layout: [0:3] mode, [3:5] focal stage code, 5 flush, 6 replay,
    [7:10] power-off stage one-hot, 10 power-off-targets-spare,
    [11:14] power-on stage one-hot, 14 power-on-targets-spare, 15 switch flip.
    """
    vec = _MODE_CODE[state.mode] & 0x7
    focal = state.suspect_stage or state.swap_stage
    if focal is not None:
        vec |= _STAGE_CODE[focal] << 3
    if actions.flush:
        vec |= 1 << 5
    if actions.replay:
        vec |= 1 << 6
    for stage, copy in actions.power_off:
        vec |= 1 << (7 + PIPELINE_ORDER.index(stage))
        if copy is Copy.SPARE:
            vec |= 1 << 10
    for stage, copy in actions.power_on:
        vec |= 1 << (11 + PIPELINE_ORDER.index(stage))
        if copy is Copy.SPARE:
            vec |= 1 << 14
    if actions.switch_flip:
        vec |= 1 << 15
    return vec


class Outcome(enum.Enum):
    COMPLETED = "completed"
    DEAD = "dead"
    EXHAUSTED = "exhausted"


@dataclass
class RecoveryEvent:
    fault_id: int | None
    stage: StageKind
    classified: str  # "permanent" | "transient"
    detect_cycle: int
    end_cycle: int  # classification cycle (permanent) or clear cycle (transient)
    swap_complete_cycle: int | None = None
    resume_cycle: int | None = None
    counting_cycles: int | None = None
    flush_cycles: int | None = None
    powerup_cycles: int | None = None
    refill_cycles: int | None = None

    @property
    def recovery_cycles(self) -> int | None:
        if self.swap_complete_cycle is None:
            return None
        return self.swap_complete_cycle - self.detect_cycle


@dataclass
class SimReport:
    outcome: Outcome
    final_state: ArchState
    total_cycles: int
    events: list
    stress: StressLedger
    final_power: dict
    config: CoreConfig
    bus_trace: list | None = None

    @property
    def permanent_events(self) -> list:
        return [e for e in self.events if e.classified == "permanent"]


@dataclass
class _FetchPacket:
    word: int
    pc: int
    is_control: bool


@dataclass
class _DecodePacket:
    instr: Instruction
    op_a: int
    op_b: int
    st_addr: int
    pc: int


def _decode_operands(instr: Instruction, regs) -> tuple[int, int, int]:
    """Operand fetch: returns (op_a, op_b, st_addr). op_a is the word driven
    onto the decode output bus."""
    op = instr.opcode
    op_a = op_b = st_addr = 0
    if op is Opcode.LDI:
        op_a = instr.imm & WORD_MASK
    elif op in (Opcode.MOV, Opcode.LD):
        op_a = regs[instr.rs1]
    elif op in (Opcode.ADD, Opcode.SUB, Opcode.AND, Opcode.OR, Opcode.XOR):
        op_a, op_b = regs[instr.rs1], regs[instr.rs2]
    elif op is Opcode.ST:
        op_a = regs[instr.rd]
        st_addr = (regs[instr.rs1] + instr.imm) & WORD_MASK
    elif op is Opcode.BEQ:
        op_a, op_b = regs[instr.rd], regs[instr.rs1]
    elif op is Opcode.JMP:
        op_a = instr.imm & WORD_MASK
    return op_a, op_b, st_addr


def run_core(program: Program, config: CoreConfig, scenario: FaultScenario, *,
             max_cycles: int = DEFAULT_MAX_CYCLES, trace: bool = False) -> SimReport:
    """Simulate the repairable core cycle by cycle under a fault scenario.

    The pipeline is in-order with interlock stalls and no forwarding; fetch
    drains behind control-flow instructions, so cycle counts are a property
    of this artifact while architectural correctness is checked against the
    reference interpreter.
    """
    scenario.validate(config.permanent_threshold)

    faults_by_site: dict = {}
    for index, fault in enumerate(scenario.faults):
        faults_by_site.setdefault((fault.site.unit, fault.site.copy), []).append((index, fault))

    blocks = {(kind, copy): BlockInstance(kind, copy,
                                          PowerState.ON if copy is Copy.MAIN else PowerState.OFF)
              for kind in PIPELINE_ORDER for copy in Copy}
    switches = {kind: Copy.MAIN for kind in PIPELINE_ORDER}
    ledger = StressLedger()
    ctrl = ControllerState(replay_pc=program.origin)

    regs = [0] * 16
    mem: dict = {}
    pc = program.origin
    halted = False
    fetch_pc = program.origin
    fetch_wait = False
    pd: _FetchPacket | None = None
    de: _DecodePacket | None = None

    max_extra = max((f.kind.extra for f in scenario.faults if isinstance(f.kind, Delay)),
                    default=1)
    true_hist: dict = {}  # site -> deque of true data words over observed cycles
    last_emitted: dict = {}  # site -> data word driven last observed cycle
    held_delay: dict = {}  # fault index -> latched stale data word

    events: list[RecoveryEvent] = []
    # Permanent events stay open until the first post-resume commit; a second
    # fault may interrupt a refill, in which case the earlier event's refill
    # span absorbs the later recovery (normal function returned only then).
    open_events: list[RecoveryEvent] = []
    bus_trace: list | None = [] if trace else None
    outcome: Outcome | None = None
    total_cycles = 0

    def attribute_fault(stage: StageKind, copy: Copy, cycle: int) -> int | None:
        for index, fault in faults_by_site.get((FaultUnit(stage.value), copy), []):
            if fault.active_at(cycle):
                return index
        return None

    for cycle in range(max_cycles):
        total_cycles = cycle + 1
        update_stress(ledger, {key: block.power for key, block in blocks.items()})

        live = ctrl.mode in (ControllerMode.MONITOR, ControllerMode.SUSPECT,
                             ControllerMode.RESUME)
        stage_masks = {kind: 0 for kind in PIPELINE_ORDER}
        emitted: dict = {}
        d_packet: _DecodePacket | None = None
        stall = False
        pending: _FetchPacket | None = None

        if live:
            # Decode: consumes the predecode latch, stalls on a read-after-write
            # hazard against the instruction currently in execute.
            d_word = 0
            if pd is not None:
                instr = decode_word(pd.word)
                producer = dst_reg(de.instr) if de is not None else 0
                if producer and producer in src_regs(instr):
                    stall = True
                else:
                    op_a, op_b, st_addr = _decode_operands(instr, regs)
                    d_packet = _DecodePacket(instr, op_a, op_b, st_addr, pd.pc)
                    d_word = op_a

            # Predecode: fetch only if the latch will be free this cycle.
            p_word = 0
            slot_free = pd is None or not stall
            if slot_free and not fetch_wait and program.in_bounds(fetch_pc):
                instr_word = encode_instruction(program.fetch(fetch_pc))
                is_control = program.fetch(fetch_pc).opcode in _CONTROL_OPS
                pending = _FetchPacket(instr_word, fetch_pc, is_control)
                p_word = instr_word

            # Execute.
            e_word = 0
            if de is not None:
                e_word = execute_result(de.instr, de.op_a, de.op_b, mem)

            for kind, word in ((StageKind.PREDECODE, p_word),
                               (StageKind.DECODE, d_word),
                               (StageKind.EXECUTE, e_word)):
                selected = switches[kind]
                block = blocks[(kind, selected)]
                assert block.power is PowerState.ON, "selected copy must be powered"
                site = (FaultUnit(kind.value), selected)
                true_bus = encode_bus(word)
                active = [(i, f) for i, f in faults_by_site.get(site, [])
                          if f.active_at(cycle)]
                for i, f in faults_by_site.get(site, []):
                    if isinstance(f.kind, Delay) and not f.active_at(cycle):
                        held_delay.pop(i, None)
                hist = true_hist.setdefault(site, deque(maxlen=max_extra + 1))
                prev_data = last_emitted.get(site, word)
                for i, f in active:
                    if isinstance(f.kind, Delay):
                        if i not in held_delay:
                            lag_index = len(hist) - f.kind.extra
                            if lag_index >= 0:
                                held_delay[i] = hist[lag_index]
                            elif hist:
                                held_delay[i] = hist[0]
                            else:
                                held_delay[i] = word
                        prev_data = held_delay[i]
                bus = apply_faults(true_bus, [f for _, f in active],
                                   InterStageBus(prev_data, true_bus.parity))
                routed = switch_route(selected,
                                      bus if selected is Copy.MAIN else encode_bus(0),
                                      bus if selected is Copy.SPARE else encode_bus(0))
                stage_masks[kind] = parity_check(routed)
                emitted[kind] = routed
                hist.append(word)
                last_emitted[site] = routed.data

        if bus_trace is not None:
            bus_trace.append(tuple(emitted[k].data for k in PIPELINE_ORDER) if live else None)

        # Controller: both copies compute the same transition; copy B's
        # outputs are complemented and the rails are compared every cycle.
        new_ctrl, actions = controller_step(ctrl, stage_masks, False, config)
        vec = controller_output_vector(new_ctrl, actions)
        ctrl_site_a = [f for i, f in faults_by_site.get((FaultUnit.CONTROLLER, Copy.MAIN), [])
                       if f.active_at(cycle)]
        ctrl_site_b = [f for i, f in faults_by_site.get((FaultUnit.CONTROLLER, Copy.SPARE), [])
                       if f.active_at(cycle)]
        rail_a = apply_vector_faults(vec, ctrl_site_a)
        rail_b = apply_vector_faults(~vec & ((1 << CONTROLLER_VEC_BITS) - 1), ctrl_site_b)
        if not trc_compare(rail_a, rail_b, CONTROLLER_VEC_BITS):
            new_ctrl, actions = controller_step(ctrl, stage_masks, True, config)

        ctrl = new_ctrl

        # Event bookkeeping.
        if actions.classified is not None:
            detect = cycle - (config.permanent_threshold - 1)
            event = RecoveryEvent(
                fault_id=attribute_fault(actions.classified, switches[actions.classified], detect),
                stage=actions.classified, classified="permanent",
                detect_cycle=detect, end_cycle=cycle,
                counting_cycles=config.permanent_threshold,
                flush_cycles=config.flush_cycles,
                powerup_cycles=config.powerup_cycles_per_block)
            events.append(event)
            open_events.append(event)
        if actions.transient_clear is not None:
            stage, run_length = actions.transient_clear
            detect = cycle - run_length
            events.append(RecoveryEvent(
                fault_id=attribute_fault(stage, switches[stage], detect),
                stage=stage, classified="transient",
                detect_cycle=detect, end_cycle=cycle))

        if actions.dead:
            outcome = Outcome.DEAD
            break

        # Apply controller actions to the fabric.
        if actions.flush:
            pd = de = None
            pending = None
        for stage, copy in actions.power_off:
            blocks[(stage, copy)].power = PowerState.OFF
        for stage, copy in actions.power_on:
            blocks[(stage, copy)].power = PowerState.POWERING
        for stage in actions.switch_flip:
            blocks[(stage, Copy.SPARE)].power = PowerState.ON
            switches[stage] = Copy.SPARE
        if actions.replay:
            fetch_pc = ctrl.replay_pc
            fetch_wait = False
            pd = de = None
            pending = None
            for event in open_events:
                if event.resume_cycle is None:
                    event.resume_cycle = cycle + 1

        for kind in PIPELINE_ORDER:
            on_copies = sum(blocks[(kind, copy)].power is PowerState.ON for copy in Copy)
            assert on_copies <= 1, "at most one copy of a stage may be powered"

        # Advance the pipeline when nothing flagged an error this cycle.
        if live and not any(stage_masks.values()) and not actions.flush:
            if de is not None:
                result = emitted[StageKind.EXECUTE].data
                instr = de.instr
                op = instr.opcode
                if op is Opcode.HALT:
                    halted = True
                    outcome = Outcome.COMPLETED
                elif op is Opcode.BEQ:
                    pc += instr.imm if result else 1
                    fetch_pc = pc
                    fetch_wait = False
                elif op is Opcode.JMP:
                    pc = result
                    fetch_pc = pc
                    fetch_wait = False
                else:
                    if op is Opcode.ST:
                        mem[de.st_addr] = result
                    else:
                        dest = dst_reg(instr)
                        if dest:
                            regs[dest] = result
                    pc += 1
                ctrl = replace(ctrl, replay_pc=pc)
                for event in open_events:
                    event.swap_complete_cycle = cycle
                    event.refill_cycles = cycle - event.resume_cycle + 1
                open_events.clear()
            # Latches capture the routed bus words, so a corruption that
            # evaded parity really does propagate downstream; sideband
            # metadata (decoded fields, addresses) is not fault-addressable.
            if d_packet is not None:
                d_packet.op_a = emitted[StageKind.DECODE].data
            de = d_packet if not stall else None
            if stall:
                pass  # pd holds; decode retries next cycle
            elif pending is not None:
                pd = _FetchPacket(emitted[StageKind.PREDECODE].data, pending.pc,
                                  pending.is_control)
                fetch_pc += 1
                if pending.is_control:
                    fetch_wait = True
            else:
                pd = None
            if outcome is not None:
                break
            if pd is None and de is None and not fetch_wait \
                    and not program.in_bounds(fetch_pc):
                # Ran past the end of the program without a HALT.
                outcome = Outcome.EXHAUSTED
                break

    if outcome is None:
        outcome = Outcome.EXHAUSTED

    ledger.assert_conserved(total_cycles)
    final_state = ArchState(tuple(regs), pc, mem, halted)
    final_power = {key: block.power for key, block in blocks.items()}
    return SimReport(outcome=outcome, final_state=final_state,
                     total_cycles=total_cycles, events=events, stress=ledger,
                     final_power=final_power, config=config, bus_trace=bus_trace)


def matches_reference(report: SimReport, program: Program,
                      max_steps: int | None = None) -> bool:
    """Golden check: a completed run must equal the reference interpreter."""
    if report.outcome is not Outcome.COMPLETED:
        return False
    steps = max_steps if max_steps is not None else max(len(program) * 4, 64)
    ref_state, _ = run_reference(program, steps)
    return report.final_state == ref_state
