"""Command-line interface: ``tte-estimand <command>``.

Errors are written to standard error as a JSON object and mapped to exit
codes 2 (validation), 3 (numeric failure) and 4 (I/O).
"""

from __future__ import annotations

import io
import json
import sys
from pathlib import Path

import click

from . import __version__, errors
from .analysis import analyze_dataset, run_analysis
from .io import dumps_report, file_digest, load_cohort, read_derived, write_cohort, write_derived
from .planning import plan_events
from .simulation import builtin_scenario, censoring_dependence_experiment, parse_scenario, simulate_cohort
from .spec import derive_dataset, get_preset, parse_spec, preset_names, preset_text


def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise errors.InputOutputError(f"cannot read {path}: {exc.strerror}") from None


def _load_spec(ref):
    """A spec file path, or the name of a built-in spec."""
    if Path(ref).is_file():
        text = _read_text(ref)
        try:
            return parse_spec(text), {"spec": file_digest(ref)}
        except errors.ParseError as exc:
            raise errors.ParseError(str(exc), path=ref) from None
    return get_preset(ref), {}


def _load_scenario(ref):
    if Path(ref).is_file():
        return parse_scenario(_read_text(ref))
    return builtin_scenario(Path(ref).stem if ref.endswith((".toml", ".cfg")) else ref)


def _emit(text, out):
    if out is None:
        click.echo(text, nl=False)
    else:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise errors.InputOutputError(f"cannot write {out}: {exc.strerror}") from None


threads_option = click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
                              help="Worker threads; results do not depend on this.")


@click.group()
@click.version_option(__version__, prog_name="tte-estimand")
def cli():
    """Estimand-driven time-to-event analysis."""


@cli.command()
@click.option("--spec", "spec_ref", required=True, help="Spec file or built-in spec name.")
@click.option("--subjects", required=True, type=click.Path(dir_okay=False))
@click.option("--events", required=True, type=click.Path(dir_okay=False))
@click.option("--cutoff", type=float, help="Clinical cutoff; overrides the subjects file.")
@click.option("--out", type=click.Path(dir_okay=False), help="Derived CSV (default: standard output).")
@click.option("--summary", type=click.Path(dir_okay=False), help="Also write a JSON derivation summary.")
@threads_option
def derive(spec_ref, subjects, events, cutoff, out, summary, threads):
    """Derive the analysis dataset, with a per-subject derivation log."""
    spec, _ = _load_spec(spec_ref)
    cohort = load_cohort(subjects, events, cutoff)
    data = derive_dataset(spec, cohort, cutoff, threads)
    if out is None:
        buf = io.StringIO()
        write_derived(data, buf)
        click.echo(buf.getvalue(), nl=False)
    else:
        write_derived(data, out)
    if summary:
        _emit(dumps_report({
            "spec": spec.name,
            "n_included": len(data),
            "n_excluded": data.n_excluded_by_population,
            "exclusion_reasons": data.exclusion_reasons,
            "status_counts": data.status_counts(),
        }), summary)


@cli.command()
@click.option("--spec", "spec_ref", required=True, help="Spec file or built-in spec name.")
@click.option("--subjects", type=click.Path(dir_okay=False))
@click.option("--events", type=click.Path(dir_okay=False))
@click.option("--derived", type=click.Path(dir_okay=False), help="Analyse a file written by 'derive' instead.")
@click.option("--cutoff", type=float)
@click.option("--seed", type=int, help="Required when the spec uses a randomized procedure.")
@click.option("--out", type=click.Path(dir_okay=False), help="Report path (default: standard output).")
@threads_option
def analyze(spec_ref, subjects, events, derived, cutoff, seed, out, threads):
    """Gatekeeper test and effect estimates for one estimand."""
    spec, digests = _load_spec(spec_ref)
    if derived is not None:
        if subjects or events:
            raise errors.InvalidArgument("give either --derived or --subjects/--events, not both")
        data = read_derived(derived, spec.name)
        digests["derived"] = file_digest(derived)
        report = analyze_dataset(spec, data, seed, threads, digests, cutoff)
    else:
        if not (subjects and events):
            raise errors.InvalidArgument("--subjects and --events are required (or --derived)")
        cohort = load_cohort(subjects, events, cutoff)
        digests.update(subjects=file_digest(subjects), events=file_digest(events))
        report = run_analysis(spec, cohort, cutoff, seed, threads, digests)
    _emit(dumps_report(report), out)


@cli.command()
@click.option("--scenario", "scenario_ref", required=True, help="Scenario file or built-in scenario name.")
@click.option("--seed", type=int, required=True)
@click.option("--n-per-arm", type=click.IntRange(min=1))
@click.option("--cutoff", type=float)
@click.option("--subjects-out", required=True, type=click.Path(dir_okay=False))
@click.option("--events-out", required=True, type=click.Path(dir_okay=False))
def simulate(scenario_ref, seed, n_per_arm, cutoff, subjects_out, events_out):
    """Simulate a cohort and write it as subjects and events CSV files."""
    sc = _load_scenario(scenario_ref)
    changes = {"seed": seed}
    if n_per_arm is not None:
        changes["n_per_arm"] = n_per_arm
    if cutoff is not None:
        changes["cutoff_calendar_time"] = cutoff
    sc = sc.with_(**changes)
    try:
        write_cohort(simulate_cohort(sc), subjects_out, events_out)
    except OSError as exc:
        raise errors.InputOutputError(f"cannot write cohort: {exc.strerror}") from None


@cli.command()
@click.option("--scenario", "scenario_ref", required=True, help="Scenario file or built-in scenario name.")
@click.option("--regimes", required=True, help="Comma-separated clinical cutoffs.")
@click.option("--reps", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--n-per-arm", type=click.IntRange(min=1))
@click.option("--out", type=click.Path(dir_okay=False))
@threads_option
def experiment(scenario_ref, regimes, reps, seed, n_per_arm, out, threads):
    """Cox versus average regression effect across cutoff regimes."""
    sc = _load_scenario(scenario_ref)
    if n_per_arm is not None:
        sc = sc.with_(n_per_arm=n_per_arm)
    try:
        cuts = [float(x) for x in regimes.split(",") if x.strip()]
    except ValueError:
        raise errors.InvalidArgument(f"--regimes must be comma-separated numbers, got {regimes!r}") from None
    report = censoring_dependence_experiment(sc, cuts, reps, seed, threads)
    _emit(dumps_report(report), out)


@cli.command()
@click.option("--alpha", type=float, default=0.05, show_default=True, help="Two-sided significance level.")
@click.option("--power", type=float, default=0.8, show_default=True)
@click.option("--hr", "hazard_ratio", type=float, required=True)
@click.option("--allocation", type=float, default=1.0, show_default=True, help="Experimental : control ratio.")
def plan(alpha, power, hazard_ratio, allocation):
    """Number of events needed for a logrank comparison."""
    d = plan_events(alpha, power, hazard_ratio, allocation)
    click.echo(dumps_report({"alpha": alpha, "power": power, "hazard_ratio": hazard_ratio,
                             "allocation_ratio": allocation, "events": d}), nl=False)


@cli.group()
def specs():
    """Built-in estimand specs."""


@specs.command("list")
def specs_list():
    for name in preset_names():
        click.echo(name)


@specs.command("show")
@click.argument("name")
def specs_show(name):
    click.echo(preset_text(name), nl=False)


def _fail(exc: errors.EstimandError):
    sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
    return exc.exit_code


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="tte-estimand", standalone_mode=False)
    except errors.EstimandError as exc:
        sys.exit(_fail(exc))
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.ClickException as exc:
        sys.stderr.write(json.dumps({"error": "UsageError", "message": exc.format_message(), "exit_code": 2},
                                    sort_keys=True) + "\n")
        sys.exit(2)
    except click.exceptions.Abort:
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
