from pathlib import Path

import numpy as np
import pytest

from conicswarm.cli import main
from conicswarm.config import ConfigError, load_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, body, name="run.cfg"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return path


TINY_SYNTHETIC = """
[problem]
model = synthetic
kappa = 1e-3
seed = 7
signed = false
atom_mass = 0.1

[rates]
mode = manual
alpha = 0.05
beta = 0.01

[schedule]
variant = fixed
eps = 0.01
batch = 16

[birth_death]
enabled = true
profile = experiments
birth_threshold = 0.0
candidates = 2

[run]
variant = stochastic
iterations = 40
seed = 3
trace_cadence = 5
init = uniform
init_particles = 6
init_weight = 0.05

[output]
dir = out
"""


class TestConfigParsing:
    def test_unknown_key_fails_closed(self, tmp_path):
        bad = TINY_SYNTHETIC.replace("eps = 0.01", "eps = 0.01\nepz = 0.5")
        with pytest.raises(ConfigError, match="epz"):
            load_config(write_config(tmp_path, bad))

    def test_unknown_section_fails_closed(self, tmp_path):
        bad = TINY_SYNTHETIC + "\n[extras]\nx = 1\n"
        with pytest.raises(ConfigError, match="extras"):
            load_config(write_config(tmp_path, bad))

    def test_missing_required_key(self, tmp_path):
        bad = TINY_SYNTHETIC.replace("kappa = 1e-3\n", "")
        with pytest.raises(ConfigError, match="kappa"):
            load_config(write_config(tmp_path, bad))

    def test_comments_and_defaults(self, tmp_path):
        body = TINY_SYNTHETIC.replace("eps = 0.01", "eps = 0.01  # exploration mass")
        spec = load_config(write_config(tmp_path, body))
        assert spec.schedule["eps"] == 0.01
        assert spec.run["kkt_grid"] == 0  # defaulted

    def test_profile_defaults(self, tmp_path):
        spec = load_config(write_config(tmp_path, TINY_SYNTHETIC))
        assert spec.birth_death["death"] == "ratio"
        theory = load_config(write_config(tmp_path, TINY_SYNTHETIC),
                             profile_override="theory")
        assert theory.birth_death["death"] == "guarded"
        # explicit keys always win over profile defaults
        assert theory.birth_death["candidates"] == 2
        bare = load_config(write_config(
            tmp_path, TINY_SYNTHETIC.replace("candidates = 2\n", "")),
            profile_override="theory")
        assert bare.birth_death["candidates"] == 1

    def test_paths_resolve_relative_to_config(self, tmp_path):
        spec = load_config(write_config(tmp_path, TINY_SYNTHETIC))
        assert spec.resolve_path("data.csv") == (tmp_path / "data.csv").resolve()


class TestCalibrateCommand:
    def test_synthetic_reports_min_cap(self, tmp_path, capsys):
        cfg = write_config(tmp_path, TINY_SYNTHETIC)
        assert main(["calibrate", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "alpha = min of caps" in out
        assert "binding:" in out

    def test_gmm_normalization_warning(self, tmp_path, capsys):
        body = """
[problem]
model = gmm
kappa = 1e-4
seed = 2
components = 3
gmm_samples = 200
tau = 0.2

[rates]
mode = calibrated

[run]
variant = full
iterations = 10
"""
        cfg = write_config(tmp_path, body)
        assert main(["calibrate", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "not normalized" in out

    def test_relu_positivity_failure_exits_2(self, tmp_path, capsys):
        body = """
[problem]
model = teacher
kappa = 5e-3
seed = 2
features = 3
reg_samples = 60
teacher_neurons = 2
label_noise = 0.1

[rates]
mode = calibrated

[run]
variant = stochastic
iterations = 10
"""
        cfg = write_config(tmp_path, body)
        assert main(["calibrate", "--config", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "positivity" in err


class TestRunCommand:
    def test_zero_iterations_writes_initial_artifacts(self, tmp_path):
        body = TINY_SYNTHETIC.replace("iterations = 40", "iterations = 0")
        cfg = write_config(tmp_path, body)
        out = tmp_path / "zero"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        trace = (out / "trace.csv").read_text().splitlines()
        assert len(trace) == 2  # header plus the initial record
        assert (out / "final_swarm.csv").exists()
        assert (out / "summary.txt").exists()

    def test_same_seed_byte_identical_traces(self, tmp_path):
        cfg = write_config(tmp_path, TINY_SYNTHETIC)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["run", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(out2)]) == 0
        assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
        assert (out1 / "final_swarm.csv").read_bytes() == \
            (out2 / "final_swarm.csv").read_bytes()

    def test_seed_flag_changes_trace(self, tmp_path):
        cfg = write_config(tmp_path, TINY_SYNTHETIC)
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert main(["run", "--config", str(cfg), "--out", str(out1), "--seed", "9"]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(out2), "--seed", "10"]) == 0
        assert (out1 / "trace.csv").read_bytes() != (out2 / "trace.csv").read_bytes()

    def test_missing_config_exits_2(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.cfg"),
                     "--out", str(tmp_path)]) == 2

    def test_horizon_schedule_with_manual_rates(self, tmp_path):
        body = TINY_SYNTHETIC.replace("variant = fixed", "variant = horizon")
        body = body.replace("alpha = 0.05", "alpha = 0.5")
        body = body.replace("iterations = 40", "iterations = 16")
        cfg = write_config(tmp_path, body)
        out = tmp_path / "hz"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "trace.csv").exists()

    def test_horizon_below_minimum_fails(self, tmp_path, capsys):
        body = TINY_SYNTHETIC.replace("variant = fixed", "variant = horizon")
        body = body.replace("iterations = 40", "iterations = 10")  # needs 1/alpha^2 = 400
        cfg = write_config(tmp_path, body)
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1
        assert "below the minimum" in capsys.readouterr().err

    def test_csv_swarm_init(self, tmp_path):
        import numpy as np
        from conicswarm.swarm import ParticleSwarm

        seed_swarm = ParticleSwarm([0.2, 0.3], [1, 1], [[0.2, 0.2], [0.7, 0.7]])
        seed_swarm.to_csv(tmp_path / "init.csv")
        body = TINY_SYNTHETIC.replace("init = uniform", "init = csv:init.csv")
        body = body.replace("iterations = 40", "iterations = 0")
        cfg = write_config(tmp_path, body)
        out = tmp_path / "fromcsv"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
        final = ParticleSwarm.from_csv(out / "final_swarm.csv")
        assert np.allclose(final.weights, seed_swarm.weights)


class TestVerifyCommand:
    def test_projection_suite_passes(self, capsys):
        assert main(["verify", "--suite", "projection"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 2

    def test_volume_suite_runs_geometric_monte_carlo(self, capsys):
        assert main(["verify", "--suite", "volume"]) == 0
        out = capsys.readouterr().out
        assert "volume/d=1" in out and "volume/d=2" in out

    def test_unknown_suite_exits_2(self, capsys):
        assert main(["verify", "--suite", "bogus"]) == 2


class TestDeskComparison:
    def test_exploration_lowers_summary_loss(self, tmp_path, capsys):
        # the desk mixture profile from a clustered start: the run with the
        # birth/death process must report a lower final loss
        base = (CONFIGS / "gmm_desk.cfg").read_text()
        base = base.replace("iterations = 5000", "iterations = 1200")
        base = base.replace("kkt_grid = 30", "kkt_grid = 0")
        losses = {}
        for tag, enabled in (("on", "true"), ("off", "false")):
            body = base.replace("enabled = true", f"enabled = {enabled}")
            cfg = tmp_path / f"gmm_{tag}.cfg"
            cfg.write_text(body)
            out = tmp_path / f"out_{tag}"
            assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
            summary = (out / "summary.txt").read_text().splitlines()
            losses[tag] = float(summary[1].split()[1])
        assert losses["on"] < losses["off"]


class TestReportCommand:
    def trace_body(self, k_values, losses):
        lines = ["k,time_s,loss,tv,particles,births,deaths,min_cert,delta,cert_norm_sq"]
        lines.append("0,,%r,1.0,4,0,0,,," % losses[0])
        for k, lo in zip(k_values, losses[1:]):
            lines.append(f"{k},,{lo!r},1.0,4,0,0,,,0.0")
        return "\n".join(lines) + "\n"

    def test_single_trace_summary(self, tmp_path, capsys):
        p = tmp_path / "trace.csv"
        p.write_text(self.trace_body([5, 10], [1.0, 0.5, 0.25]))
        assert main(["report", str(p)]) == 0
        out = capsys.readouterr().out
        assert "0.25" in out

    def test_identical_traces_identical_rows(self, tmp_path, capsys):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        body = self.trace_body([5, 10], [1.0, 0.5, 0.25])
        a.write_text(body)
        b.write_text(body)
        assert main(["report", str(a), str(b)]) == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l]
        assert lines[1].split()[1:] == lines[2].split()[1:]

    def test_multi_horizon_slope_fit(self, tmp_path, capsys):
        # rho ~ K^-0.5 exactly: the fitted slope must come out at -0.5
        paths = []
        for k in (100, 400, 1600):
            p = tmp_path / f"k{k}.csv"
            p.write_text(self.trace_body([k], [1.0, k ** -0.5]))
            paths.append(str(p))
        assert main(["report", *paths, "--jref", "0.0"]) == 0
        out = capsys.readouterr().out
        assert "slope" in out
        slope = float(out.split("slope vs K:")[1].split()[0])
        assert slope == pytest.approx(-0.5, abs=1e-6)

    def test_malformed_trace_exits_1(self, tmp_path, capsys):
        p = tmp_path / "bad.csv"
        p.write_text("k,loss\n0,1.0\n")
        assert main(["report", str(p)]) == 1


class TestShippedProfiles:
    def test_all_shipped_configs_parse(self):
        for cfg in sorted(CONFIGS.glob("*.cfg")):
            if cfg.name == "housing_full.cfg":
                continue  # requires a user-supplied dataset
            load_config(cfg)

    def test_full_scale_gmm_profile_matches_reference_scale(self):
        spec = load_config(CONFIGS / "gmm_full.cfg")
        assert spec.problem["gmm_samples"] == 24000
        assert spec.problem["components"] == 25
        assert spec.problem["kappa"] == pytest.approx(1e-4)
        assert spec.run["init_particles"] == 20
        assert spec.schedule["batch"] == 256
        assert spec.birth_death["tau_death"] == pytest.approx(5.0)

    def test_full_scale_housing_profile_matches_reference_scale(self):
        spec = load_config(CONFIGS / "housing_full.cfg")
        assert spec.problem["kappa"] == pytest.approx(5e-4)
        assert spec.run["init_particles"] == 300
        assert spec.schedule["batch"] == 256
        assert spec.birth_death["tau_death"] == pytest.approx(5.0)
