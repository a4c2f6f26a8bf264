"""
Fleet rollout: deploy a compiled bundle to the nodes of a fleet configuration.
"""
import logging
import sys

from aspectdsl import read_bundle
from weaver import WeaveOptions

from .fleet_config import load_fleet_config
from .coordinator import FleetJob, deploy, TERMINAL_STATUSES

logger = logging.getLogger("hotmend.fleet")


def run_fleet_driver(bundle_path, config_path, node_filter=None, options: WeaveOptions = None,
                     stats_accumulator=None):
    print("Deploying bundle", "=" * 40, file=sys.stderr)
    config = load_fleet_config(config_path)
    bundle = read_bundle(bundle_path)
    targets = config.select_nodes(node_filter)
    if not targets:
        logger.warning("no node of %s matches %r", config_path, node_filter)
    print(f"    {bundle.bundle_id} -> {len(targets)} node(s): "
          f"{', '.join(n.node_id for n in targets) or '(none)'}", file=sys.stderr)

    job = FleetJob(bundle, targets, options or WeaveOptions())
    report = deploy(job, config.connect_timeout, config.reply_timeout)

    for result in report.results:
        line = f"    {result.node_id:<16} {result.status:<12} {result.wall_us:>10} us"
        if result.reason:
            line += f"  {result.reason}"
        print(line, file=sys.stderr)
    print(f"    {report}", file=sys.stderr)

    if stats_accumulator is not None:
        counts = report.counts
        for status in TERMINAL_STATUSES:
            stats_accumulator.add(f'fleet.{status.lower()}', counts[status])
        stats_accumulator.add('fleet.wall_us', report.wall_us)
        stats_accumulator.add_bulk({f'fleet.{key}': value for key, value in report.wall_metrics().items()})

    return {
        'job': job,
        'report': report,
    }
