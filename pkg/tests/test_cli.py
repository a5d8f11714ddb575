import io
import json
import subprocess
import sys

import pytest

from flagmirror.cli import main, parse_complex, parse_qlist, read_config, InputError

KEYS = {"check", "paper_anchor", "status", "residual", "runtime_ms", "seed"}


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def test_parse_complex():
    assert parse_complex("0.3") == 0.3
    assert parse_complex("0.1-0.2i") == complex(0.1, -0.2)
    assert parse_complex("-i") == -1j
    assert parse_complex("2e-1+3i") == complex(0.2, 3)
    with pytest.raises(InputError):
        parse_complex("abc")


def test_parse_qlist_broadcast():
    assert parse_qlist("0.5", 2).tolist() == [0.5, 0.5]
    with pytest.raises(InputError):
        parse_qlist("1,2,3", 2)


@pytest.mark.parametrize(
    "argv",
    [
        ["toda", "delta", "--n", "2"],
        ["toda", "check", "--n", "2"],
        ["qh", "ring", "--n", "2"],
        ["qh", "product", "--n", "2", "--a", "J_1", "--b", "J_2"],
        ["qh", "fiber", "--n", "2", "--q", "0.5,0.3+0.1i"],
        ["qh", "degree-two", "--n", "2"],
        ["qh", "residue-check", "--n", "2"],
        ["mirror", "crit", "--n", "2", "--q", "0.5,1.2i"],
        ["mirror", "check", "--n", "2", "--q", "0.5,1.2i", "--all"],
        ["mirror", "amplitude", "--n", "3"],
        ["series", "compute", "--n", "2", "--order", "2", "--check", "integrals"],
        ["series", "compute", "--n", "1", "--order", "3", "--check", "recursion-rank"],
        ["series", "cpn", "--N", "3", "--order", "4"],
        ["integral", "torus", "--n", "1", "--q", "0.3", "--hbar", "1", "--grid", "256"],
        ["integral", "saddle", "--q", "0.25"],
    ],
)
def test_commands_report_schema(argv):
    code, text = run(*argv)
    assert code == 0, text
    rep = json.loads(text)
    assert KEYS <= rep.keys()
    assert rep["status"] == "pass"


def test_complex_values_are_pairs():
    code, text = run("qh", "fiber", "--n", "1", "--q", "1")
    pts = json.loads(text)["points"]
    assert sorted(pts) == [[[-1.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [-1.0, 0.0]]]


def test_n9_is_invalid_input(capsys):
    code, _ = run("toda", "check", "--n", "9")
    assert code == 2
    assert "n <= 3" in capsys.readouterr().err


def test_bad_q_is_invalid_input():
    assert run("mirror", "crit", "--n", "2", "--q", "0,1")[0] == 2
    assert run("mirror", "crit", "--n", "2", "--q", "x")[0] == 2


def test_unknown_subcommand_exits_2():
    assert run("nope")[0] == 2


def test_budget_exit_3(monkeypatch):
    import flagmirror.mirror as mirror
    from flagmirror.errors import IncompleteEnumeration

    def fail(*a, **k):
        raise IncompleteEnumeration(3, 6)

    monkeypatch.setattr(mirror, "find_critical_points", fail)
    assert run("mirror", "crit", "--n", "2", "--q", "1,1")[0] == 3


def test_injected_sign_error(capsys):
    code, text = run("qh", "residue-check", "--n", "2", "--inject-sign-error")
    assert code == 1
    assert json.loads(text)["check"] == "residue-check"
    assert "residue-check" in capsys.readouterr().err


def test_verify_all_quick():
    code, text = run("verify-all", "--profile", "quick")
    assert code == 0
    rep = json.loads(text)
    assert len(rep["sections"]) == 7
    assert all(s["status"] == "pass" for s in rep["sections"])
    for s in rep["sections"]:
        assert KEYS <= s.keys()


def test_verify_all_injected(capsys):
    code, text = run("verify-all", "--inject", "residue-sign")
    assert code == 1
    rep = json.loads(text)
    assert "residue-check" in rep["failed"]
    assert "residue-check" in capsys.readouterr().err


def test_reproducible_json():
    def strip(text):
        rep = json.loads(text)
        rep.pop("runtime_ms")
        return rep

    a = run("mirror", "check", "--n", "2", "--q", "0.4,0.9-0.3i", "--seed", "5")[1]
    b = run("mirror", "check", "--n", "2", "--q", "0.4,0.9-0.3i", "--seed", "5")[1]
    assert strip(a) == strip(b)


def test_config_defaults_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nn = 1\nq = 0.49\nformat = csv\n")
    assert read_config(cfg) == {"n": 1, "q": "0.49", "format": "csv"}
    code, text = run("mirror", "crit", "--config", str(cfg))
    assert code == 0 and text.startswith("key,value")
    code, text = run("mirror", "crit", "--config", str(cfg), "--format", "json", "--n", "2", "--q", "1,1")
    assert json.loads(text)["count"] == 6


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert run("toda", "delta", "--config", str(cfg))[0] == 2


def test_csv_rows():
    code, text = run("integral", "saddle", "--format", "csv")
    lines = text.strip().splitlines()
    assert lines[0] == "deviation,hbar,ratio" and len(lines) == 7


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "flagmirror", "toda", "delta", "--n", "1"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["D"]["D_1"] == "p_0*p_1 + q_1"
