"""
Kommandozeile: jede Fähigkeit als Unterbefehl mit reproduzierbaren Flags
und maschinenlesbarer Ausgabe (JSON/CSV).

Exit-Codes: 0 Erfolg, 1 Laufzeit-/Numerikfehler, 2 Aufruffehler.
"""
import functools
import json
import logging
from pathlib import Path

import click
import numpy as np
from pydantic import ValidationError

from . import __version__
from .adapter import (CosaAdapter, adapter_from_dict, adapter_to_dict, analyze_core, expected_file_size,
                      load_adapter, save_adapter)
from .budget import compare_methods, load_manifest, model_budget
from .config import RIP_DEFAULTS, REFERENCE_STUDY, TRAIN_DEFAULTS, configure_logging, default_threads
from .errors import ArgumentError, CosaError, FormatError, NumericalError
from .models import CliConfig, MethodSpec, OptimizerConfig, RipTheoryConfig, ToyTaskSpec
from .projection import coherence, dictionary_view, make_pair
from .randgen import derive_seed, gaussian_matrix, parse_seed
from .reports import write_report
from .rip import (estimate_rip, planted_recovery_trials, ratio_histogram, run_rip_study,
                  sample_base_seed, theoretical_bound)
from .train import asymmetry, compare_adapters, grad_check, gradcheck_fixture, run_toy, sweep_ab

logger = logging.getLogger(__name__)

# "reference" ist ein Alias für das Preset der RIP-Studie
PRESETS = ("paper-table4", "reference")


class SeedType(click.ParamType):
    name = "seed"

    def convert(self, value, param, ctx):
        try:
            return parse_seed(value)
        except ArgumentError as e:
            self.fail(str(e), param, ctx)


class IntListType(click.ParamType):
    name = "int-list"

    def convert(self, value, param, ctx):
        if isinstance(value, (list, tuple)):
            return list(value)
        try:
            return [int(part) for part in str(value).split(",") if part.strip()]
        except ValueError:
            self.fail(f"expected comma-separated integers, got {value!r}", param, ctx)


class ConfigPairType(click.ParamType):
    name = "AxB"

    def convert(self, value, param, ctx):
        if isinstance(value, tuple):
            return value
        try:
            a, b = str(value).lower().split("x")
            return int(a), int(b)
        except ValueError:
            self.fail(f"expected AxB (e.g. 32x8), got {value!r}", param, ctx)


SEED = SeedType()
INT_LIST = IntListType()
CONFIG_PAIR = ConfigPairType()


def handle_errors(fn):
    """Fehler -> Exit-Codes (Aufruffehler 2, sonstige Toolkit-Fehler 1)"""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ArgumentError, ValidationError) as e:
            raise click.UsageError(str(e))
        except CosaError as e:
            click.echo(f"Error: {e}", err=True)
            raise click.exceptions.Exit(1)
    return wrapper


def _config(ctx: click.Context) -> CliConfig:
    obj = ctx.obj
    return CliConfig(command=ctx.info_name, seed=obj['seed'], out=obj['out'], format=obj['format'],
                     threads=obj['threads'], flags=dict(ctx.params))


def _emit(ctx: click.Context, rows, summary=None, lines=()) -> None:
    """Report schreiben; ohne --out auf stdout, sonst Kurzfassung auf stdout"""
    config = _config(ctx)
    text = write_report(rows, config, summary)
    if config.out:
        for line in lines:
            click.echo(line)
        click.echo(f"Report written to {config.out}")
    else:
        click.echo(text, nl=False)
        for line in lines:
            click.echo(line, err=True)


def _fmt(value, spec: str = ".4f") -> str:
    return "n/a" if value is None else format(value, spec)


def _matrix_seeds(base: int, count: int):
    return [derive_seed(base, k) for k in range(count)]


def _theory_options(fn):
    fn = click.option("--C", "C", type=float, default=1.0, show_default=True, help="Bound constant C")(fn)
    fn = click.option("--m-eff", type=float, default=None, help="Effective measurements (default m*n)")(fn)
    fn = click.option("--n-ambient", type=float, default=None, help="Ambient dimension (default a*b)")(fn)
    fn = click.option("--log-base", type=float, default=None, help="Logarithm base (default e)")(fn)
    return fn


def _theory(C, m_eff, n_ambient, log_base, eta=None) -> RipTheoryConfig:
    values = {'C': C, 'm_eff': m_eff, 'n_ambient': n_ambient}
    if log_base is not None:
        values['log_base'] = log_base
    if eta is not None:
        values['eta'] = eta
    return RipTheoryConfig(**values)


def _dims(preset, m, n, a, b, configs):
    """Basis-Dimensionen und Konfigurationsliste aus Preset oder Flags"""
    if preset in PRESETS:
        return REFERENCE_STUDY['m'], REFERENCE_STUDY['n'], list(REFERENCE_STUDY['configs'])
    configs = list(configs)
    if a is not None or b is not None:
        if a is None or b is None:
            raise ArgumentError("--a and --b must be given together")
        configs.append((a, b))
    if not configs:
        raise ArgumentError("give --preset, --config AxB or --a/--b")
    return m, n, configs


@click.group()
@click.version_option(__version__, prog_name="cosa")
@click.option("--seed", type=SEED, default="0", show_default=True, help="Base seed (decimal or 0x hex)")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
@click.option("--threads", type=click.IntRange(min=1), envvar="COSA_THREADS", default=None,
              help="Worker threads (env COSA_THREADS)")
@click.option("--log-level", default=None, help="Logging level (env COSA_LOG_LEVEL)")
@click.pass_context
def cli(ctx, seed, out, fmt, threads, log_level):
    """Compressed-sensing adapters: RIP analysis, budgets and toy training."""
    configure_logging(log_level)
    ctx.obj = {'seed': seed, 'out': out, 'format': fmt, 'threads': threads or default_threads()}


@cli.command()
@click.option("--preset", type=click.Choice(PRESETS), default=None)
@click.option("--m", type=int, default=REFERENCE_STUDY['m'], show_default=True)
@click.option("--n", type=int, default=REFERENCE_STUDY['n'], show_default=True)
@click.option("--a", type=int, default=None)
@click.option("--b", type=int, default=None)
@click.option("--config", "configs", type=CONFIG_PAIR, multiple=True, help="Compression config AxB (repeatable)")
@click.option("--s", "sparsities", type=int, multiple=True, help="Sparsity level (repeatable)")
@click.option("--samples", type=int, default=RIP_DEFAULTS['num_samples'], show_default=True)
@click.option("--matrix-seeds", type=click.IntRange(min=1), default=None, help="Number of matrix realizations")
@click.option("--ortho", is_flag=True, help="Orthonormalize L columns and R rows")
@click.option("--histogram", type=click.Path(dir_okay=False), default=None,
              help="Also write ratio histograms (first matrix seed) as CSV")
@_theory_options
@click.pass_context
@handle_errors
def rip(ctx, preset, m, n, a, b, configs, sparsities, samples, matrix_seeds, ortho, histogram,
        C, m_eff, n_ambient, log_base):
    """Empirical RIP study over compression configs and sparsity levels."""
    m, n, config_list = _dims(preset, m, n, a, b, configs)
    if preset in PRESETS:
        sparsities = sparsities or REFERENCE_STUDY['sparsities']
        samples = REFERENCE_STUDY['num_samples']
        matrix_seeds = matrix_seeds or REFERENCE_STUDY['matrix_seeds']
    sparsities = list(sparsities) or [5]
    seeds = _matrix_seeds(ctx.obj['seed'], matrix_seeds or 1)
    report = run_rip_study(config_list, sparsities, (m, n), samples, seeds,
                           theory=_theory(C, m_eff, n_ambient, log_base),
                           orthonormalize=ortho, threads=ctx.obj['threads'])
    if histogram:
        hist_rows = []
        for ca, cb in config_list:
            view = dictionary_view(make_pair(seeds[0], m, n, ca, cb, orthonormalize=ortho))
            for s in sparsities:
                estimate = estimate_rip(view, s, samples, sample_base_seed(seeds[0], s),
                                        threads=ctx.obj['threads'], keep_ratios=True)
                hist_rows.extend(dict(row, config=f"{ca}x{cb}") for row in ratio_histogram(estimate))
        write_report(hist_rows, CliConfig(command="rip-histogram", seed=ctx.obj['seed'], out=histogram,
                                          format="csv", threads=ctx.obj['threads'], flags=dict(ctx.params)))
    lines = [f"{row.config:>8} s={row.s:<3} delta={row.delta_mean:.4f} ± {row.delta_std:.4f}  "
             f"mu={_fmt(row.coherence)}  "
             f"bound={row.bound:.4f}"
             for row in report.rows]
    _emit(ctx, report.as_rows(), {'m': m, 'n': n, 'num_samples': samples, 'matrix_seeds': list(seeds)}, lines)


@cli.command(name="coherence")
@click.option("--preset", type=click.Choice(PRESETS), default=None)
@click.option("--m", type=int, default=REFERENCE_STUDY['m'], show_default=True)
@click.option("--n", type=int, default=REFERENCE_STUDY['n'], show_default=True)
@click.option("--a", type=int, default=None)
@click.option("--b", type=int, default=None)
@click.option("--config", "configs", type=CONFIG_PAIR, multiple=True)
@click.option("--matrix-seeds", type=click.IntRange(min=1), default=None)
@click.option("--ortho", is_flag=True)
@click.pass_context
@handle_errors
def cmd_coherence(ctx, preset, m, n, a, b, configs, matrix_seeds, ortho):
    """Mutual coherence of the Kronecker dictionary per config."""
    m, n, config_list = _dims(preset, m, n, a, b, configs)
    if preset in PRESETS:
        matrix_seeds = matrix_seeds or REFERENCE_STUDY['matrix_seeds']
    seeds = _matrix_seeds(ctx.obj['seed'], matrix_seeds or 1)
    rows = []
    for ca, cb in config_list:
        values = np.array([coherence(dictionary_view(make_pair(seed, m, n, ca, cb, orthonormalize=ortho)))
                           for seed in seeds])
        rows.append({'config': f"{ca}x{cb}", 'a': ca, 'b': cb, 'coherence_mean': float(values.mean()),
                     'coherence_std': float(values.std()), 'coherence_max': float(values.max())})
    lines = [f"{row['config']:>8} mu={row['coherence_mean']:.4f} ± {row['coherence_std']:.4f}" for row in rows]
    _emit(ctx, rows, {'m': m, 'n': n, 'matrix_seeds': list(seeds)}, lines)


@cli.command()
@click.option("--s", "sparsities", type=int, multiple=True, required=True)
@click.option("--eta", type=float, default=None, help="Failure probability (bookkeeping)")
@_theory_options
@click.pass_context
@handle_errors
def bound(ctx, sparsities, eta, C, m_eff, n_ambient, log_base):
    """Theoretical RIP bound C*sqrt(s*log(n)/m)."""
    if m_eff is None or n_ambient is None:
        raise ArgumentError("bound needs --m-eff and --n-ambient")
    cfg = _theory(C, m_eff, n_ambient, log_base, eta)
    rows = [{'s': s, 'bound': theoretical_bound(cfg, s), 'C': cfg.C, 'm_eff': cfg.m_eff,
             'n_ambient': cfg.n_ambient, 'confidence': 1.0 - cfg.eta} for s in sparsities]
    _emit(ctx, rows, lines=[f"s={row['s']}: {row['bound']:.4f}" for row in rows])


@cli.command()
@click.option("--demo", type=click.Choice(["planted"]), default="planted", show_default=True)
@click.option("--s", type=int, default=3, show_default=True)
@click.option("--trials", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--m", type=int, default=512, show_default=True)
@click.option("--n", type=int, default=256, show_default=True)
@click.option("--a", type=int, default=32, show_default=True)
@click.option("--b", type=int, default=8, show_default=True)
@click.option("--min-magnitude", type=float, default=0.5, show_default=True)
@click.option("--ortho", is_flag=True)
@click.pass_context
@handle_errors
def omp(ctx, demo, s, trials, m, n, a, b, min_magnitude, ortho):
    """Planted sparse recovery with orthogonal matching pursuit."""
    view = dictionary_view(make_pair(ctx.obj['seed'], m, n, a, b, orthonormalize=ortho))
    result = planted_recovery_trials(view, s, trials, derive_seed(ctx.obj['seed'], 7), min_magnitude)
    line = (f"OMP planted recovery: {result.successes}/{result.trials} exact supports "
            f"(max coefficient error {result.max_coefficient_error:.2e})")
    _emit(ctx, result.rows, {'successes': result.successes, 'trials': result.trials,
                             'max_coefficient_error': result.max_coefficient_error}, [line])


@cli.command()
@click.option("--manifest", required=True, help="Manifest path or bundled name (e.g. llama32-1b.json)")
@click.option("--method", "methods", multiple=True, required=True,
              help="lora, pissa, dora, vera, cosa, full (repeat to compare)")
@click.option("--r", type=int, default=None)
@click.option("--a", type=int, default=None)
@click.option("--b", type=int, default=None)
@click.option("--bytes", "bytes_per_param", type=float, default=4, show_default=True)
@click.option("--opt-mult", type=float, default=3, show_default=True)
@click.pass_context
@handle_errors
def budget(ctx, manifest, methods, r, a, b, bytes_per_param, opt_mult):
    """Trainable-parameter and memory budget over a model manifest."""
    model = load_manifest(manifest)
    specs = [MethodSpec(method=method, r=r, a=a, b=b) for method in methods]
    if len(specs) > 1:
        rows = compare_methods(specs, model, bytes_per_param, opt_mult)
        lines = [f"{row['method']:>16}: {row['total_params']:,} params ({row['total_params'] / 1e6:.2f}M)"
                 for row in rows]
        _emit(ctx, rows, lines=lines)
        return
    report = model_budget(specs[0], model, bytes_per_param, opt_mult)
    total = report.total_params
    _emit(ctx, report.as_rows(), report.summary(),
          [f"total_params: {total:,} ({total / 1e6:.2f}M)"])


def _task_options(fn):
    options = [
        click.option("--task", type=click.Choice(["inspan", "offspan"]), default="inspan", show_default=True),
        click.option("--m", type=int, default=64, show_default=True),
        click.option("--n", type=int, default=48, show_default=True),
        click.option("--a", type=int, default=16, show_default=True),
        click.option("--b", type=int, default=8, show_default=True),
        click.option("--steps", type=click.IntRange(min=0), default=TRAIN_DEFAULTS['steps'], show_default=True),
        click.option("--batch", type=click.IntRange(min=1), default=TRAIN_DEFAULTS['batch_size'], show_default=True),
        click.option("--optimizer", type=click.Choice(["sgd", "adam", "adamw"]),
                     default=TRAIN_DEFAULTS['optimizer'], show_default=True),
        click.option("--lr", type=float, default=TRAIN_DEFAULTS['lr'], show_default=True),
        click.option("--weight-decay", type=float, default=TRAIN_DEFAULTS['weight_decay'], show_default=True),
        click.option("--schedule", type=click.Choice(["constant", "linear", "cosine"]),
                     default=TRAIN_DEFAULTS['schedule'], show_default=True),
        click.option("--warmup", type=float, default=TRAIN_DEFAULTS['warmup_ratio'], show_default=True),
        click.option("--clip", type=float, default=None, help="Global gradient max-norm"),
        click.option("--alpha", type=float, default=1.0, show_default=True, help="Adapter scale"),
        click.option("--ortho", is_flag=True),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _task(ctx, task, m, n, a, b, steps, batch, optimizer, lr, weight_decay, schedule, warmup, clip,
          alpha, ortho, **extra) -> ToyTaskSpec:
    opt = OptimizerConfig(kind=optimizer, lr=lr, weight_decay=weight_decay, schedule=schedule,
                          warmup_ratio=warmup, max_grad_norm=clip)
    kind = "inspan_recovery" if task == "inspan" else "offspan_regression"
    return ToyTaskSpec(kind=kind, m=m, n=n, a=a, b=b, seed=ctx.obj['seed'], batch_size=batch, steps=steps,
                       alpha_scale=alpha, orthonormalize=ortho, optimizer=opt, **extra)


@cli.command()
@_task_options
@click.option("--adapter", "adapter_kind", type=click.Choice(["cosa", "lora"]), default="cosa", show_default=True)
@click.option("--r", type=int, default=4, show_default=True, help="LoRA rank")
@click.option("--compare-lora", type=int, default=None, help="Also train LoRA with this rank on the same teacher")
@click.option("--init-adapter", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Warm-start Y from a COSA1 file")
@click.option("--save-adapter", "save_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@handle_errors
def train(ctx, adapter_kind, r, compare_lora, init_adapter, save_path, **flags):
    """Teacher-student toy training of a CoSA (or LoRA) adapter."""
    spec = _task(ctx, adapter=adapter_kind, lora_rank=r, **flags)
    if save_path and adapter_kind != "cosa":
        raise ArgumentError("--save-adapter needs a CoSA adapter")
    if compare_lora is not None:
        rows = compare_adapters(spec, compare_lora, threads=ctx.obj['threads'])
        _emit(ctx, rows, lines=[f"{row['adapter']:>5}: params={row['params']} loss={row['final_loss']:.4e}"
                                for row in rows])
        return
    init = None
    if init_adapter:
        warm = load_adapter(init_adapter)
        if (warm.a, warm.b) != (spec.a, spec.b):
            raise ArgumentError(f"warm-start core is {warm.a}x{warm.b}, task needs {spec.a}x{spec.b}")
        if warm.seed != derive_seed(spec.seed, 0):
            logger.warning(f"Warmstart-Seed {warm.seed:#x} passt nicht zur Aufgabe; nur Y wird übernommen")
        init = warm.Y
    trace = run_toy(spec, init=init)
    if save_path:
        size = save_adapter(trace.adapter, save_path)
        click.echo(f"Adapter written to {save_path} ({size} bytes)", err=True)
    rows = [{'step': step, 'loss': loss} for step, loss in enumerate(trace.losses)]
    _emit(ctx, rows, trace.as_dict(include_losses=False),
          [f"final relative error {trace.final_relative_error:.3e} (loss {trace.final_loss:.4e})"])


@cli.command()
@_task_options
@click.option("--a-list", type=INT_LIST, required=True, help="Comma-separated a values")
@click.option("--b-list", type=INT_LIST, required=True, help="Comma-separated b values")
@click.pass_context
@handle_errors
def sweep(ctx, a_list, b_list, **flags):
    """Grid over (a, b) on one fixed teacher with nested dictionaries."""
    flags['a'], flags['b'] = max(a_list), max(b_list)
    base = _task(ctx, **flags)
    rows = sweep_ab(base, a_list, b_list, threads=ctx.obj['threads'])
    pairs = asymmetry(rows)
    lines = [f"{row['a']:>4}x{row['b']:<4} params={row['params']:<6} loss={row['final_loss']:.4e}" for row in rows]
    _emit(ctx, rows, {'asymmetry': pairs}, lines)


@cli.command()
@click.option("--trials", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--adapter", "adapter_kind", type=click.Choice(["cosa", "lora", "both"]), default="both",
              show_default=True)
@click.option("--step", type=float, default=1e-5, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.pass_context
@handle_errors
def gradcheck(ctx, trials, adapter_kind, step, tol):
    """Finite-difference check of the analytic gradients on random small layers."""
    kinds = ["cosa", "lora"] if adapter_kind == "both" else [adapter_kind]
    rows = []
    for trial in range(trials):
        seed = derive_seed(ctx.obj['seed'], trial)
        for kind in kinds:
            layer, X, target = gradcheck_fixture(seed, kind)
            adapter = layer.adapter
            rows.append({'trial': trial, 'adapter': kind, 'm': adapter.m, 'n': adapter.n,
                         'a': getattr(adapter, 'a', None), 'b': getattr(adapter, 'b', None),
                         'r': getattr(adapter, 'r', None), 'batch': X.shape[1],
                         'max_rel_error': grad_check(layer, X, target, step)})
    worst = max(row['max_rel_error'] for row in rows)
    _emit(ctx, rows, {'max_rel_error': worst, 'tolerance': tol},
          [f"gradient check: max relative error {worst:.3e} over {len(rows)} layers"])
    if worst > tol:
        raise NumericalError(f"gradient check failed: {worst:.3e} > {tol:.0e}", residual=worst)


@cli.command()
@click.option("--adapter", "adapter_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--threshold", type=float, default=None, help="Sparsity threshold for |Y_ij|")
@click.option("--energy", type=float, default=None, help="Spectral energy fraction for effective rank")
@click.pass_context
@handle_errors
def analyze(ctx, adapter_path, threshold, energy):
    """Structure of a trained core: sparsity, effective rank, norm, condition."""
    adapter = load_adapter(adapter_path)
    options = {key: value for key, value in (('sparsity_threshold', threshold), ('energy', energy))
               if value is not None}
    stats = analyze_core(adapter.Y, **options)
    row = dict(stats.as_dict(), m=adapter.m, n=adapter.n, a=adapter.a, b=adapter.b)
    summary = {'singular_values': list(stats.singular_values or ())}
    _emit(ctx, [row], summary, [f"effective rank {stats.effective_rank}, sparsity {stats.sparsity_fraction:.3f}"])


def _read_description(path: str) -> dict:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path} is not valid JSON: {e}")
    if isinstance(document, dict) and 'data' in document:
        if not document['data']:
            raise FormatError(f"{path} contains no adapter")
        document = document['data'][0]
    if not isinstance(document, dict):
        raise FormatError(f"{path} does not describe an adapter")
    return document


@cli.command(name="export")
@click.option("--from-json", "source", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Adapter description (output of 'import')")
@click.option("--m", type=int, default=None)
@click.option("--n", type=int, default=None)
@click.option("--a", type=int, default=None)
@click.option("--b", type=int, default=None)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--init", type=click.Choice(["zero", "random"]), default="zero", show_default=True)
@click.pass_context
@handle_errors
def export_adapter(ctx, source, m, n, a, b, alpha, init):
    """Write a COSA1 adapter file to --out."""
    out = ctx.obj['out']
    if not out:
        raise ArgumentError("export needs --out")
    if source:
        adapter = adapter_from_dict(_read_description(source))
    else:
        if None in (m, n, a, b):
            raise ArgumentError("export needs --from-json or all of --m, --n, --a, --b")
        seed = ctx.obj['seed']
        Y = gaussian_matrix(derive_seed(seed, 9), a, b) if init == "random" else None
        adapter = CosaAdapter(m, n, a, b, seed=seed, alpha_scale=alpha, Y=Y)
    size = save_adapter(adapter, out)
    if size != expected_file_size(adapter.a, adapter.b):
        raise FormatError(f"wrote {size} bytes, expected {expected_file_size(adapter.a, adapter.b)}")
    click.echo(f"Adapter written to {out} ({size} bytes)")


@cli.command(name="import")
@click.argument("adapter_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
@handle_errors
def import_adapter(ctx, adapter_path):
    """Read a COSA1 file and print its description."""
    adapter = load_adapter(adapter_path)
    _emit(ctx, [adapter_to_dict(adapter)])


def main():
    cli(prog_name="cosa")


if __name__ == "__main__":
    main()
