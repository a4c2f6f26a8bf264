"""
hotmend: turn a source security patch into a dynamic patch and weave it
into running processes without restarting them.

    python3 main.py translate --old fixtures/sshd/old --diff fixtures/sshd-ca-2002-18.patch --out build/
    python3 main.py alarm build/patch.dpatch --target input_userauth_info_response --message "nresp overflow attempt" --out build/patch.dpatch
    python3 main.py compile build/patch.dpatch --out build/sshd.bundle
    python3 main.py weave build/sshd.bundle --process sshd --config fixtures/fleet.yaml
    python3 main.py agent --node node-a --fleet fixtures/fleet.yaml
    python3 main.py deploy build/sshd.bundle --fleet fixtures/fleet.yaml --nodes 'node-*'

Steps of translate:
1) read the unified diff and rebuild every patched file (diffcore)
2) parse both versions, diff them structurally and classify each change (classifier)
3) generate the aspects, render the .dpatch and the audit view (aspectdsl)

Progress goes to standard error; standard output only carries the
machine-readable report of the command. Exit codes: 0 success, 1
operational failure, 2 a change can only be applied statically.
"""
import argparse
import logging
import os
import sys

# utilities.py lives one level up, in patch-deployment/
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import utilities
from utilities import HotmendError, canonical_text
from diffcore import run_diffcore_driver
from classifier import run_classifier_driver
from csubset import canonical_dump
from aspectdsl import (
    run_aspectdsl_driver, run_compile_driver, read_bundle, write_bundle, parse_patch, render_patch, insert_alarm,
)
from weaver import WeaveOptions, run_weaver_driver
from fleet import (
    load_fleet_config, launch_process, start_load, run_fleet_driver,
    NodeAgent, HostedProcess, agent_serve,
)
from reporting import ReportAccumulator

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_STATIC_ONLY = 2

PATCH_FILENAME = 'patch.dpatch'
AUDIT_FILENAME = 'audit.txt'
VERDICTS_FILENAME = 'verdicts.json'
AST_DIRNAME = 'ast'

logger = logging.getLogger("hotmend")


def emit(report):
    """Write a machine-readable report on standard output."""
    sys.stdout.write(canonical_text(report))
    sys.stdout.flush()


def cmd_translate(args, stats):
    missing = utilities.check_files_exist([args.old, args.diff])
    if missing:
        raise HotmendError(f"missing input: {', '.join(missing)}")

    utilities.banner(f"Translating {args.diff}")
    diff_data = run_diffcore_driver(args.old, args.diff, stats)
    classified = run_classifier_driver(diff_data['revisions'], stats)
    patch_data = run_aspectdsl_driver(classified['analyses'], args.advisory, args.description, stats)

    os.makedirs(args.out, exist_ok=True)
    if args.dump_ast:
        for analysis in classified['analyses']:
            for version, unit in (('old', analysis.old_unit), ('new', analysis.new_unit)):
                utilities.write_text(canonical_dump(unit),
                                     os.path.join(args.out, AST_DIRNAME, f"{analysis.path}.{version}.json"))
        print(f"Wrote AST dumps to: {os.path.join(args.out, AST_DIRNAME)}", file=sys.stderr)
    audit_path = os.path.join(args.out, AUDIT_FILENAME)
    utilities.write_text(patch_data['audit_text'], audit_path)
    print(f"Wrote audit to: {audit_path}", file=sys.stderr)
    changes = classified['change_set'].to_plain()
    verdicts_path = os.path.join(args.out, VERDICTS_FILENAME)
    utilities.write_text(canonical_text(changes), verdicts_path)
    print(f"Wrote verdicts to: {verdicts_path}", file=sys.stderr)

    report = {'changes': changes, 'audit': audit_path, 'verdicts': verdicts_path}
    if patch_data['patch'] is None:
        report['refused'] = [f"{item.kind} {item.old_name}: {item.verdict.reason}" for item in patch_data['refused']]
        emit(report)
        return EXIT_STATIC_ONLY

    patch_path = os.path.join(args.out, PATCH_FILENAME)
    utilities.write_text(patch_data['patch_text'], patch_path)
    print(f"Wrote dynamic patch to: {patch_path}", file=sys.stderr)
    report['patch'] = patch_path
    report['aspects'] = len(patch_data['patch'].aspects)
    emit(report)
    stats.save_summary()
    return EXIT_OK


def cmd_compile(args, stats):
    utilities.banner(f"Compiling {args.patch}")
    compiled = run_compile_driver(args.patch, stats)
    write_bundle(compiled['bundle'], args.out)
    print(f"Wrote bundle to: {args.out}", file=sys.stderr)
    emit({'bundle_id': compiled['bundle'].bundle_id, 'bundle': args.out,
          'required_symbols': list(compiled['bundle'].required_symbols)})
    return EXIT_OK


def cmd_alarm(args, stats):
    utilities.banner(f"Adding alarm on {args.target} to {args.patch}")
    patch = parse_patch(utilities.read_text(args.patch))
    alarmed = insert_alarm(patch, args.target, args.message, args.name)
    utilities.write_text(render_patch(alarmed), args.out)
    print(f"Wrote dynamic patch to: {args.out}", file=sys.stderr)
    stats.add('alarm.aspects', len(alarmed.aspects))
    emit({'patch': args.out, 'aspect': alarmed.aspects[-1].name, 'aspects': len(alarmed.aspects)})
    return EXIT_OK


def _weave_options(args):
    return WeaveOptions(
        wait_for_quiescence=args.wait_quiescent,
        quiescence_timeout=args.timeout,
        collapse_trampolines=args.collapse,
    )


def cmd_weave(args, stats):
    utilities.banner(f"Weaving {args.bundle} into {args.process}")
    config = load_fleet_config(args.config)
    spec = config.process(args.process)
    bundle = read_bundle(args.bundle)
    process = launch_process(spec)

    woven = run_weaver_driver(
        bundle, process,
        requests=spec.request_load(),
        executors=spec.threads,
        options=_weave_options(args),
        settle_requests=args.settle,
        stats_accumulator=stats,
    )
    report = woven['report']
    plain = report.to_plain()
    plain['deferred'] = report.deferred
    plain['request_outcomes'] = woven['outcomes']
    emit(plain)
    return EXIT_OK if report.ok else EXIT_FAILURE


def cmd_deploy(args, stats):
    utilities.banner(f"Deploying {args.bundle}")
    deployed = run_fleet_driver(args.bundle, args.fleet, args.nodes, _weave_options(args), stats)
    report = deployed['report']
    emit(report.to_plain())
    return EXIT_OK if report.ok else EXIT_FAILURE


def cmd_agent(args, stats):
    config = load_fleet_config(args.fleet)
    node = config.node(args.node)
    hosted = {}
    for name in node.processes:
        spec = config.process(name)
        process = launch_process(spec)
        hosted[name] = HostedProcess(process, start_load(process, spec))
    host, port = node.host, node.port
    if args.listen:
        host, _, port = args.listen.rpartition(':')
        port = int(port)
    utilities.banner(f"Agent {node.node_id} hosting {', '.join(hosted) or 'nothing'}")
    try:
        agent_serve(host, port, NodeAgent(node.node_id, hosted))
    except KeyboardInterrupt:
        print("Agent stopped", file=sys.stderr)
    return EXIT_OK


def _add_weave_flags(parser):
    parser.add_argument('--wait-quiescent', action='store_true',
                        help='Activate only once no replaced function is on any stack')
    parser.add_argument('--timeout', type=float, default=5.0,
                        help='Quiescence timeout in simulated seconds (default: 5.0)')
    parser.add_argument('--collapse', action='store_true',
                        help='Point rewritten sites straight at the new code after activation')


def build_parser():
    parser = argparse.ArgumentParser(prog='hotmend', description='Dynamic security patches for running C programs.')
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    parser.add_argument('--stats-csv', type=str, default=None, help='Append this run\'s figures to a CSV file')
    commands = parser.add_subparsers(dest='command', required=True)

    translate = commands.add_parser('translate', help='Source diff -> .dpatch and audit report')
    translate.add_argument('--old', required=True, help='Directory holding the unpatched sources')
    translate.add_argument('--diff', required=True, help='Unified diff of the security patch')
    translate.add_argument('--out', required=True, help='Output directory')
    translate.add_argument('--advisory', default='', help='Advisory identifier recorded in the patch')
    translate.add_argument('--description', default='', help='One-line description recorded in the patch')
    translate.add_argument('--dump-ast', action='store_true', help='Also write canonical AST dumps of both versions')
    translate.set_defaults(handler=cmd_translate)

    alarm = commands.add_parser('alarm', help='Raise an alarm whenever a replacement takes its failure path')
    alarm.add_argument('patch', help='Dynamic patch file')
    alarm.add_argument('--target', required=True, help='Replaced function whose new version should raise the alarm')
    alarm.add_argument('--message', required=True, help='Alarm message')
    alarm.add_argument('--name', default=None, help='Aspect name (default: alarm_<target>)')
    alarm.add_argument('--out', required=True, help='Dynamic patch file to write')
    alarm.set_defaults(handler=cmd_alarm)

    compile_ = commands.add_parser('compile', help='.dpatch -> bundle')
    compile_.add_argument('patch', help='Dynamic patch file')
    compile_.add_argument('--out', required=True, help='Bundle file to write')
    compile_.set_defaults(handler=cmd_compile)

    weave = commands.add_parser('weave', help='Weave a bundle into a locally launched process under load')
    weave.add_argument('bundle', help='Bundle file')
    weave.add_argument('--process', required=True, help='Process name in the configuration')
    weave.add_argument('--config', required=True, help='Fleet/process configuration (YAML)')
    weave.add_argument('--settle', type=int, default=0, help='Requests to serve after weaving before stopping')
    _add_weave_flags(weave)
    weave.set_defaults(handler=cmd_weave)

    deploy = commands.add_parser('deploy', help='Weave a bundle on a set of node agents')
    deploy.add_argument('bundle', help='Bundle file')
    deploy.add_argument('--fleet', required=True, help='Fleet configuration (YAML)')
    deploy.add_argument('--nodes', default=None, help='Comma-separated node id patterns (default: all nodes)')
    _add_weave_flags(deploy)
    deploy.set_defaults(handler=cmd_deploy)

    agent = commands.add_parser('agent', help='Host a node\'s processes and serve weave requests')
    agent.add_argument('--node', required=True, help='Node id in the fleet configuration')
    agent.add_argument('--fleet', required=True, help='Fleet configuration (YAML)')
    agent.add_argument('--listen', default=None, help='host:port overriding the configured address')
    agent.set_defaults(handler=cmd_agent)
    return parser


def configure_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
    root = logging.getLogger('hotmend')
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    out_dir = getattr(args, 'out', None)
    base_path = out_dir if out_dir and args.command == 'translate' else os.getcwd()
    stats = ReportAccumulator(base_path, command=args.command)
    try:
        code = args.handler(args, stats)
    except (HotmendError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE

    if args.stats_csv:
        stats.add('exit_code', code)
        stats.append_to_csv(args.stats_csv)
    if args.verbose:
        stats.print_summary()
    return code


if __name__ == '__main__':
    sys.exit(main())
