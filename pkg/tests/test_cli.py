import subprocess
import sys

import pytest

from switchsr import cli


def run(*args):
    return cli.main([str(a) for a in args])


def test_no_arguments_prints_usage_and_exits_1(capsys):
    assert run() == 1
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["frobnicate"], ["gradcheck", "--model", "fsrcnn_t", "--bogus"],
                                  ["gradcheck"], ["synth", "--scale", "3"]])
def test_usage_errors_exit_1(argv, capsys):
    assert run(*argv) == 1
    assert "usage" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "switchsr"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage" in proc.stderr


def test_gradcheck_reports_and_succeeds(tmp_path, capsys):
    assert run("gradcheck", "--model", "fsrcnn_t", "--seed", 7, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out
    err = float(out.split("error")[1].split()[0])
    assert err < 1e-4


def test_runs_log_records_config(tmp_path):
    run("gradcheck", "--model", "lapsrn_t", "--seed", 3, "--tau", 0.05, "--out", tmp_path)
    line = (tmp_path / "runs.log").read_text().splitlines()[-1]
    assert line.startswith("gradcheck ")
    assert "seed=3" in line and "tau=0.05" in line and f"out={tmp_path}" in line


def test_config_file_then_flags(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# desk run\nseed = 4\ntau=0.03\nepochs=2\nfsrcnn_t.d=8\n")
    args = cli.build_parser().parse_args(["synth", "--config", str(conf), "--seed", "9"])
    cfg = cli.resolve_config(args)
    assert cfg.seed == 9 and cfg.tau == 0.03 and cfg.epochs == 2
    assert cfg.model_spec("fsrcnn_t").hyper["d"] == 8
    assert cfg.model_spec("fsrcnn_t").hyper["s"] == 4


@pytest.mark.parametrize("text", ["nonsense\n", "colour=blue\n", "srgan.d=3\n"])
def test_bad_config_file_is_a_data_error(tmp_path, text, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text(text)
    assert run("gradcheck", "--model", "fsrcnn_t", "--config", conf, "--out", tmp_path) == 2
    assert "error" in capsys.readouterr().err


def test_missing_corpus_is_a_data_error(tmp_path, capsys):
    assert run("metrics", "--out", tmp_path) == 2
    assert "manifest.csv" in capsys.readouterr().err


def test_nonpositive_tau_is_rejected(tmp_path):
    assert run("gradcheck", "--model", "fsrcnn_t", "--tau", 0, "--out", tmp_path) == 2


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    conf = out / "desk.conf"
    conf.write_text("dbpn_t.channels=4\nfsrcnn_t.d=8\nepochs=2\nn=12\npatch_size=32\n")
    base = ["--config", conf, "--out", out, "--seed", 2]
    assert run("synth", *base) == 0
    assert run("train-model", "--model", "dbpn_t", *base) == 0
    assert run("train-model", "--model", "fsrcnn_t", *base) == 0
    return out, base


def test_label_writes_patch_labels(small_run):
    out, base = small_run
    assert run("label", "--tau", 0.02, "--deep", "dbpn_t", *base) == 0
    lines = (out / "labels.csv").read_text().splitlines()
    assert lines[0] == "patch_id,delta_ssim,label,threshold"
    assert len(lines) == 13
    for line in lines[1:]:
        _, delta, label, tau = line.split(",")
        assert float(tau) == 0.02
        assert label == ("difficult" if float(delta) >= 0.02 else "easy")


def test_metrics_and_bench(small_run):
    out, base = small_run
    assert run("metrics", "--model", "fsrcnn_t", *base) == 0
    assert (out / "metrics.csv").read_text().startswith("patch_id,psnr_db,ssim,entropy_bits\n")
    assert run("bench", "--configs", "fsrcnn_t,dbpn_t,oracle:fsrcnn_t+dbpn_t", "--patch-counts", "4,8", *base) == 0
    assert len((out / "bench.csv").read_text().splitlines()) == 7
    assert run("report", *base) == 0


def test_bench_missing_weights_is_a_data_error(small_run, capsys):
    _, base = small_run
    assert run("bench", "--configs", "drln_proxy_t", "--patch-counts", "4", *base) == 2
    assert "drln_proxy_t.spec" in capsys.readouterr().err
