import math
from pathlib import Path

import pytest

from ifrsim.cli import main

SAMPLES = Path(__file__).resolve().parent.parent / "samples"
WORKLOAD = str(SAMPLES / "workload.asm")


def parse_csv(text: str):
    meta, columns, rows = {}, None, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value
        elif columns is None:
            columns = line.split(",")
        else:
            rows.append(dict(zip(columns, line.split(","))))
    return meta, columns, rows


def run_cli(args, tmp_path, name="out.csv"):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out.read_text() if out.exists() else ""


# ---------------------------------------------------------------------------
# sim
# ---------------------------------------------------------------------------

def test_sim_fault_free(tmp_path):
    code, text = run_cli(["sim", WORKLOAD, str(SAMPLES / "faultfree.flt")], tmp_path)
    meta, _, rows = parse_csv(text)
    assert code == 0
    assert meta["outcome"] == "completed"
    assert meta["golden_match"] == "true"
    assert rows == []


def test_sim_table_style_decode_stuckat(tmp_path):
    code, text = run_cli(["sim", WORKLOAD, str(SAMPLES / "decode_stuckat.flt")], tmp_path)
    meta, _, rows = parse_csv(text)
    assert code == 0
    assert meta["golden_match"] == "true"
    assert len(rows) == 1
    assert rows[0]["class"] == "permanent" and rows[0]["stage"] == "decode"
    assert float(rows[0]["recovery_us"]) < 2.0


def test_sim_controller_fault_exits_dead(tmp_path):
    code, text = run_cli(["sim", WORKLOAD, str(SAMPLES / "controller_stuck.flt")], tmp_path)
    meta, _, _ = parse_csv(text)
    assert code == 4
    assert meta["outcome"] == "dead"


def test_sim_parity_blind_corruption_exits_mismatch(tmp_path):
    program = tmp_path / "tiny.asm"
    program.write_text("LDI r1, 4\nNOP\nNOP\nHALT\n")
    scenario = tmp_path / "blind.flt"
    scenario.write_text("@2 T:1 execute.main flip 0\n@2 T:1 execute.main flip 1\n")
    code, text = run_cli(["sim", str(program), str(scenario)], tmp_path)
    meta, _, _ = parse_csv(text)
    assert code == 5
    assert meta["golden_match"] == "false"


def test_sim_bad_program_is_parse_error(tmp_path):
    program = tmp_path / "bad.asm"
    program.write_text("FROB r1\n")
    code = main(["sim", str(program), str(SAMPLES / "faultfree.flt")])
    assert code == 2


def test_sim_config_file_overrides(tmp_path):
    config = tmp_path / "core.cfg"
    config.write_text("permanent_threshold=20\nflush_cycles=5\n")
    code, text = run_cli(["sim", WORKLOAD, str(SAMPLES / "decode_stuckat.flt"),
                          "--config", str(config)], tmp_path)
    meta, _, rows = parse_csv(text)
    assert code == 0
    assert meta["permanent_threshold"] == "20"
    assert int(rows[0]["recovery_cycles"]) == (20 - 1) + 5 + 64 + 3


# ---------------------------------------------------------------------------
# formulas
# ---------------------------------------------------------------------------

def test_formulas_tmr_standby_grid(tmp_path):
    code, text = run_cli(["formulas", "--tmr", "--standby", "-R", "0..1:0.1"], tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0
    assert len(rows) == 11
    for row in rows:
        assert float(row["r_standby"]) >= float(row["r_tmr"]) - 1e-15


def test_formulas_ifr_spares(tmp_path):
    code, text = run_cli(["formulas", "--ifr", "--rb", "0.9", "-s", "0..3"], tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0
    values = [float(r["r_ifr"]) for r in rows]
    assert values == pytest.approx([0.9, 0.99, 0.999, 0.9999], abs=1e-9)


def test_formulas_availability(tmp_path):
    code, text = run_cli(["formulas", "--availability", "--mttf", "999", "--mttr", "1"],
                         tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0
    assert float(rows[0]["availability"]) == pytest.approx(0.999, abs=1e-12)


def test_formulas_ifr_pipeline(tmp_path):
    code, text = run_cli(["formulas", "--ifr-pipeline", "--rp", "0.9",
                          "--coverage", "1", "--rsw", "0.99", "--rctrl", "0.99"], tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0
    assert float(rows[0]["r_ifr_pipeline"]) == pytest.approx(0.970299, abs=1e-9)


def test_formulas_exponential_bridge(tmp_path):
    code, text = run_cli(["formulas", "--exp", "--rate", "1e-3", "--hours", "1000"],
                         tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0
    assert float(rows[0]["reliability"]) == pytest.approx(math.exp(-1.0), abs=1e-9)


def test_formulas_requires_one_group(tmp_path):
    assert main(["formulas", "--tmr", "--ifr", "--out", str(tmp_path / "x.csv")]) == 2


# ---------------------------------------------------------------------------
# markov
# ---------------------------------------------------------------------------

def test_markov_builtin_single_point(tmp_path):
    code, text = run_cli(["markov", "--builtin", "simplex", "--lam", "1e-6", "--T", "1000"],
                         tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0
    lower, upper = float(rows[0]["lower"]), float(rows[0]["upper"])
    # The CSV renders 9 significant digits, so allow one digit of slack.
    assert lower * (1 - 1e-8) <= 1 - math.exp(-1e-3) <= upper * (1 + 1e-8)


def test_markov_tmr_sweep_shape(tmp_path):
    code, text = run_cli(["markov", "--builtin", "tmr", "--sweep", "1e-6", "1e-2", "25",
                          "--T", "1000"], tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0
    assert len(rows) == 25
    uppers = [float(r["upper"]) for r in rows]
    assert all(b >= a - 1e-15 for a, b in zip(uppers, uppers[1:]))
    assert uppers[0] < 1e-4 and uppers[-1] > 0.999


def test_markov_model_file(tmp_path):
    code, text = run_cli(["markov", "--model", str(SAMPLES / "twostate.model"),
                          "--T", "1000"], tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0
    assert float(rows[0]["lower"]) * (1 - 1e-8) <= 1 - math.exp(-1.0) \
        <= float(rows[0]["upper"]) * (1 + 1e-8)


def test_markov_model_file_sweep_constant(tmp_path):
    code, text = run_cli(["markov", "--model", str(SAMPLES / "twostate.model"),
                          "--sweep-const", "lambda", "1e-6", "1e-3", "5", "--T", "1000"],
                         tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0 and len(rows) == 5


def test_markov_with_mc_oracle(tmp_path):
    code, text = run_cli(["markov", "--builtin", "standby", "--lam", "1e-3",
                          "--T", "1000", "--mc", "20000", "--seed", "9"], tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0
    row = rows[0]
    assert float(row["mc_estimate"]) - float(row["mc_ci99"]) <= float(row["upper"])
    assert float(row["mc_estimate"]) + float(row["mc_ci99"]) >= float(row["lower"])


def test_markov_malformed_model_is_parse_error(tmp_path):
    bad = tmp_path / "bad.model"
    bad.write_text("STATE up;\nup => dead : 1;\n")
    assert main(["markov", "--model", str(bad), "--out", str(tmp_path / "x.csv")]) == 2


def test_markov_builtin_needs_point_or_sweep(tmp_path):
    assert main(["markov", "--builtin", "tmr", "--out", str(tmp_path / "x.csv")]) == 2


def test_markov_aux_ratio_flag_changes_ifr_curve(tmp_path):
    base = ["markov", "--builtin", "ifr-pipeline", "--lam", "1e-6", "--T", "1000"]
    _, text_1000 = run_cli(base, tmp_path, "a.csv")
    _, text_100 = run_cli(base + ["--aux-ratio", "1e-2"], tmp_path, "b.csv")
    upper_1000 = float(parse_csv(text_1000)[2][0]["upper"])
    upper_100 = float(parse_csv(text_100)[2][0]["upper"])
    # Heavier switch/controller rates push the curve start off the 1e-6 scale.
    assert upper_1000 < 3e-6 < upper_100


def test_sim_rejects_unknown_config_key(tmp_path):
    config = tmp_path / "core.cfg"
    config.write_text("warp_factor=9\n")
    assert main(["sim", WORKLOAD, str(SAMPLES / "faultfree.flt"),
                 "--config", str(config), "--out", str(tmp_path / "x.csv")]) == 2


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def test_compare_scales_and_identity(tmp_path):
    code, text = run_cli(["compare", "--sweep", "1e-6", "1e-2", "13", "--T", "1000"],
                         tmp_path)
    _, _, rows = parse_csv(text)
    assert code == 0
    first = rows[0]
    assert float(first["lambda"]) == 1e-6
    assert float(first["simplex_lower"]) == pytest.approx(9.995e-4, rel=1e-3)
    assert float(first["ifr_upper"]) < 1e-5
    for row in rows:
        # Complement identity: TMR failure never exceeds 3x standby failure.
        tmr_mid = (float(row["tmr_lower"]) + float(row["tmr_upper"])) / 2
        stb_mid = (float(row["standby_lower"]) + float(row["standby_upper"])) / 2
        assert tmr_mid <= 3 * stb_mid * (1 + 1e-9)
        assert float(row["tmr_lower"]) <= 3 * float(row["standby_upper"]) * (1 + 1e-12)


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("args", [
    ["sim", WORKLOAD, str(SAMPLES / "decode_stuckat.flt"), "--seed", "11"],
    ["formulas", "--tmr", "--standby"],
    ["markov", "--builtin", "ifr-pipeline", "--sweep", "1e-6", "1e-2", "9",
     "--mc", "5000", "--seed", "3"],
    ["compare", "--sweep", "1e-6", "1e-2", "7"],
])
def test_reports_are_byte_identical_across_runs(args, tmp_path):
    code1, first = run_cli(args, tmp_path, "a.csv")
    code2, second = run_cli(args, tmp_path, "b.csv")
    assert code1 == code2 == 0
    assert first == second
    assert first.encode() == second.encode()
