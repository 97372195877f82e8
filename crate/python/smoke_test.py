"""Smoke test for the `adhoc` Python extension.

Builds the extension with cargo if needed, imports it from a scratch
directory and exercises every function once. Run directly or via pytest.
"""

import importlib
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module(scratch):
    lib = ROOT / "target" / "release" / "libadhoc.so"
    if not lib.exists():
        subprocess.run(["cargo", "build", "--release", "-p", "adhoc-py"], cwd=ROOT, check=True)
    shutil.copy(lib, Path(scratch) / "adhoc.so")
    sys.path.insert(0, str(scratch))
    return importlib.import_module("adhoc")


def test_smoke():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        adhoc = load_module(d)

        report = adhoc.train(examples=300, seed=3, out=str(d / "m.txt"))
        assert [r["name"] for r in report["rows"]] == ["guard_type1", "guard_type2", "attacker_type1", "attacker_type2"]
        assert all(0.0 <= r["accuracy"] <= 1.0 for r in report["rows"])

        summaries = []
        for name, on in [("a", "true"), ("b", "false")]:
            cfg = f"id = {name}\npolicy = b650\nepisodes = 30\nseed = 5\nadhoc = {on}\ntraces = true\n"
            s = adhoc.experiment(cfg, models=str(d / "m.txt"), out_dir=str(d / name))
            assert s["episodes"] == 30 and 0.0 <= s["win_pct"] <= 100.0
            summaries.append(d / name / "summary.json")
        assert json.loads(summaries[0].read_text())["id"] == "a"

        c = adhoc.compare(str(summaries[0]), str(summaries[1]), resamples=500)
        assert c["win_diff_ci"]["lo"] <= c["win_diff"] <= c["win_diff_ci"]["hi"]

        try:
            adhoc.experiment("episodes = 0")
        except ValueError:
            pass
        else:
            raise AssertionError("bad config accepted")

        trace = d / "a" / "traces" / "episode_0000.jsonl"
        rows = adhoc.explain(str(trace), ["why did you wait in step 1", "what"])
        assert len(rows) == 2
        assert "answer" in rows[0] or "error" in rows[0]
        assert "cannot parse" in rows[1]["error"]


if __name__ == "__main__":
    test_smoke()
    print("python smoke test: ok")
