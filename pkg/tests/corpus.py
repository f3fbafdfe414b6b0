"""Randomized program and fault-scenario generators shared by the test suite.

Programs are straight-line with forward-only control flow so every run
terminates; scenarios are derived from a fault-free bus trace so stuck-at
exposures are guaranteed by construction.
"""
from __future__ import annotations

import random

from ifrsim.faults import (FaultScenario, FaultSite, FaultUnit, StuckAt,
                           TimedFault, TransientFlip, PERMANENT)
from ifrsim.hw import Copy, PIPELINE_ORDER, parity_encode
from ifrsim.isa import Program, assemble
from ifrsim.pipeline import CoreConfig, run_core

_ALU = ("ADD", "SUB", "AND", "OR", "XOR")


def gen_program(rng: random.Random, body_length: int = 16) -> Program:
    """Random terminating program touching all three stages: register inits,
    ALU traffic, loads/stores through a base register, and forward branches."""
    lines = ["LDI r9, 64"]
    for reg in range(1, 7):
        lines.append(f"LDI r{reg}, {rng.randrange(-99, 100)}")
    total = len(lines) + body_length + 1  # plus final HALT
    while len(lines) < total - 1:
        index = len(lines)
        room = total - 1 - index  # indices strictly before the HALT slot
        roll = rng.random()
        if roll < 0.55 or room < 3:
            op = rng.choice(_ALU)
            lines.append(f"{op} r{rng.randrange(1, 9)}, r{rng.randrange(0, 9)}, "
                         f"r{rng.randrange(0, 9)}")
        elif roll < 0.70:
            lines.append(f"LDI r{rng.randrange(1, 9)}, {rng.randrange(-99, 100)}")
        elif roll < 0.80:
            lines.append(f"ST r{rng.randrange(1, 9)}, r9, {rng.randrange(0, 16)}")
        elif roll < 0.90:
            lines.append(f"LD r{rng.randrange(1, 8)}, r9, {rng.randrange(0, 16)}")
        elif roll < 0.96:
            offset = rng.randrange(2, min(6, room + 1))
            lines.append(f"BEQ r{rng.randrange(0, 9)}, r{rng.randrange(0, 9)}, {offset}")
        else:
            target = index + rng.randrange(2, min(6, room + 1))
            lines.append(f"JMP {target}")
    lines.append("HALT")
    return assemble("\n".join(lines))


def trace_run(program: Program, config: CoreConfig):
    """Fault-free run with the per-cycle bus trace captured."""
    return run_core(program, config, FaultScenario(), trace=True)


def _bus_bit(data_word: int, bit: int) -> int:
    if bit < 32:
        return (data_word >> bit) & 1
    return (parity_encode(data_word) >> (bit - 32)) & 1


def gen_transient_scenario(rng: random.Random, total_cycles: int,
                           threshold: int) -> FaultScenario:
    """Only faults shorter than the permanent threshold, spaced so error
    streaks can never chain across fault windows on one stage."""
    faults = []
    slots = max(1, (max(total_cycles, 30) - 6) // 20)
    chosen = rng.sample(range(slots), k=min(rng.randrange(1, 4), slots))
    for slot in chosen:
        start = 3 + slot * 20
        stage = rng.choice(PIPELINE_ORDER)
        site = FaultSite(FaultUnit(stage.value), Copy.MAIN)
        duration = rng.randrange(1, min(8, threshold - 1))
        if rng.random() < 0.6:
            kind = TransientFlip(rng.randrange(0, 36))
        else:
            kind = StuckAt(rng.randrange(0, 36), rng.randrange(0, 2))
        faults.append(TimedFault(kind, site, start, duration))
    return FaultScenario(tuple(faults))


def gen_permanent_stuckat_scenario(rng: random.Random, trace: list) -> FaultScenario:
    """One permanent stuck-at on an active-copy bus whose stuck value is
    guaranteed to differ from the transported value at its start cycle."""
    live = [(cycle, row) for cycle, row in enumerate(trace) if row is not None]
    usable = [entry for entry in live if 3 <= entry[0] <= len(trace) - 8]
    cycle, row = rng.choice(usable if usable else live)
    stage_index = rng.randrange(0, 3)
    bit = rng.randrange(0, 36)
    value = 1 - _bus_bit(row[stage_index], bit)
    stage = PIPELINE_ORDER[stage_index]
    site = FaultSite(FaultUnit(stage.value), Copy.MAIN)
    return FaultScenario((TimedFault(StuckAt(bit, value), site, cycle, PERMANENT),))
