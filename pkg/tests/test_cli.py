from pathlib import Path

import numpy as np
import pytest

from densegan import cli, metrics, train

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_describe_arch(capsys):
    code, out, _ = run(capsys, "describe-arch", "dense12")
    lines = out.splitlines()
    assert code == 0 and len(lines) == 18
    assert lines[5] == "Merged layer Size([64, 704, 4, 4])"
    assert out == GOLDEN.joinpath("dense12_b64.txt").read_text()


def test_describe_batch_flag(capsys):
    code, out, _ = run(capsys, "describe-arch", "fisher-base", "--batch", "3")
    assert code == 0 and out.splitlines()[0] == "Input Size([3, 100, 1, 1])"


@pytest.mark.parametrize("argv", [
    ["describe-arch", "nosuch"], ["frobnicate"], ["describe-arch", "dense4", "--bogus"], [],
    ["eval", "--checkpoint", "x.npz"],
])
def test_usage_errors_exit_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_gradcheck_is_deterministic(capsys):
    first = run(capsys, "gradcheck", "--seed", "7")
    second = run(capsys, "gradcheck", "--seed", "7")
    assert first == second
    assert first[0] == 0
    assert "critic_objective" in first[1] and "FAIL" not in first[1]


def test_train_resume_and_errors(capsys, tmp_path):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text(train.TrainConfig(dataset="gauss2d", batch_size=16, noise_dim=4, hidden_dim=8,
                                     total_gen_steps=6, checkpoint_every=3).to_text())
    assert run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "run"))[0] == 0
    assert len(train.read_metrics(tmp_path / "run" / "metrics.csv")) == 6
    code, _, _ = run(capsys, "train", "--resume", str(tmp_path / "run" / "ckpt_latest.npz"),
                     "--out", str(tmp_path / "run"), "--steps", "8")
    assert code == 0 and len(train.read_metrics(tmp_path / "run" / "metrics.csv")) == 8

    cfg.write_text("unknown_key = 1\n")
    code, _, err = run(capsys, "train", "--config", str(cfg))
    assert code == 1 and "unknown key" in err


def test_eval_writes_score_row(capsys, tmp_path, cifar_dir):
    config = train.TrainConfig(arch_name="fisher-base", dataset="cifar10", batch_size=2, total_gen_steps=0,
                               data_dir=str(cifar_dir))
    train.train_loop(config, tmp_path / "run")
    clf = metrics.SurrogateClassifier.init((3, 32, 32), 10, np.random.default_rng(0))
    clf.save(tmp_path / "s.npz")
    code, out, _ = run(capsys, "eval", "--checkpoint", str(tmp_path / "run" / "ckpt_000000.npz"),
                       "--samples", "20", "--splits", "2", "--surrogate", str(tmp_path / "s.npz"),
                       "--report", str(tmp_path / "scores.csv"))
    assert code == 0 and "inception score" in out
    header, row = (tmp_path / "scores.csv").read_text().splitlines()
    assert header == ",".join(metrics.SCORE_HEADER)
    assert row.startswith("fisher-base,0,") and row.endswith(f",20,2,{clf.hash}")


def test_eval_missing_surrogate(capsys, tmp_path):
    code, _, err = run(capsys, "eval", "--checkpoint", "c.npz", "--samples", "5",
                       "--surrogate", str(tmp_path / "none.npz"))
    assert code == 1 and "none.npz" in err


def test_train_surrogate_command(capsys, tmp_path, cifar_dir):
    code, out, _ = run(capsys, "train-surrogate", "--data-dir", str(cifar_dir), "--train", "10",
                       "--heldout", "2", "--epochs", "1", "--out", str(tmp_path / "s.npz"))
    assert code == 0 and (tmp_path / "s.npz").exists() and "held-out accuracy" in out
