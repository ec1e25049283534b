import os
import time

import pytest

from impulse_weights import acceptance, cli

SEED = 1


@pytest.fixture(scope="module")
def runs():
    return {r.number: r for r in acceptance.run_all(SEED)}


def _record(log, k, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {title} ({detail})"
    print(line)
    log.append(line)


@pytest.mark.parametrize("k", range(1, 14))
def test_criterion(runs, acceptance_log, k):
    run = runs[k]
    failed = [r.line() for r in run.reports if not r.passed]
    detail = f"{len(run.reports) - len(failed)}/{len(run.reports)} checks, {run.seconds:.1f}s"
    _record(acceptance_log, k, run.title, run.passed, detail)
    assert not failed, "\n".join(failed)


def test_criterion_14_verify_end_to_end(tmp_path, acceptance_log):
    t0 = time.perf_counter()
    code = cli.run(["verify", "--seed", str(SEED), "--out", str(tmp_path)])
    secs = time.perf_counter() - t0
    ds_path = os.path.join(tmp_path, "acceptance.csv")
    with open(ds_path, encoding="utf-8") as fh:
        rows = fh.read().splitlines()[1:]
    bad = [r for r in rows if not r.endswith(",true")]
    ok = code == 0 and not bad and secs < 300 and len(rows) > 13
    _record(acceptance_log, 14, acceptance.TITLES[14], ok,
            f"exit {code}, {len(rows) - len(bad)}/{len(rows)} rows pass, {secs:.1f}s")
    assert code == 0
    assert not bad, "\n".join(bad)
    assert secs < 300
