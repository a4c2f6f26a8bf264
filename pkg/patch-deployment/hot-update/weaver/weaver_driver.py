"""
Local weave: inject a bundle into a freshly launched process under request load.
"""
import logging
import sys
import time

from targetvm import RequestLoad

from .weave_types import WeaveOptions
from .weave_transaction import weave

logger = logging.getLogger("hotmend.weaver")

WARMUP_TIMEOUT = 5.0


def _warm_up(load: RequestLoad, requests_wanted):
    deadline = time.monotonic() + WARMUP_TIMEOUT
    while load.served < requests_wanted and time.monotonic() < deadline and load.running:
        time.sleep(0.001)


def run_weaver_driver(bundle, process, requests=(), executors=0, options: WeaveOptions = None,
                      settle_requests=0, stats_accumulator=None):
    """
    Weave `bundle` into `process` while `executors` OS threads keep serving
    `requests`. Returns the report and the request outcomes seen meanwhile.
    """
    print("Weaving bundle", "=" * 40, file=sys.stderr)
    print(f"    bundle {bundle.bundle_id} into {process.name} "
          f"({executors} executor(s), {len(requests)} request kind(s))", file=sys.stderr)

    load = None
    if executors and requests:
        load = RequestLoad(process, requests, executors=executors).start()
        _warm_up(load, executors)

    try:
        report = weave(process, bundle, options or WeaveOptions(), driver=load)
        if load is not None and settle_requests:
            _warm_up(load, load.served + settle_requests)
    finally:
        if load is not None:
            load.stop()

    print(f"    {report}", file=sys.stderr)
    outcomes = dict(load.outcomes) if load is not None else {}
    if outcomes:
        print(f"    requests served: {sum(outcomes.values())} {outcomes}", file=sys.stderr)

    if stats_accumulator is not None:
        stats_accumulator.add('weave.outcome', report.outcome)
        stats_accumulator.add('weave.sites_rewritten', report.sites_rewritten)
        stats_accumulator.add('weave.elapsed_us', report.elapsed_us)
        stats_accumulator.add('weave.waited_steps', report.waited_steps)
        stats_accumulator.add('weave.requests_served', sum(outcomes.values()))

    return {
        'report': report,
        'process': process,
        'outcomes': outcomes,
    }
