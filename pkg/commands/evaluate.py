# commands/evaluate.py
import click

from config import get_config
from errors import ValidationError
from models.schema import Dataset
from services.artifact_service import read_edges, read_matrix, read_model, write_json, write_report, write_roc
from services.data_service import read_dataset, read_schema
from services.evaluation_service import empirical_kl, graph_roc, importance_roc, roc_sweep
from services.junction_service import sample_from_model

from commands.model import load_normalized
from commands.options import schema_option, start_run


@click.command('eval-roc')
@click.option('--true-graph', 'truth_path', type=click.Path(dir_okay=False), required=True,
              help='True edge list CSV (u,v).')
@click.option('--model', 'model_path', type=click.Path(dir_okay=False), default=None,
              help='Model JSON; edges are swept by block norm.')
@click.option('--estimate', 'estimate_path', type=click.Path(dir_okay=False), default=None,
              help='Estimated edge list CSV.')
@click.option('--ranks', 'ranks_path', type=click.Path(dir_okay=False), default=None,
              help='Rank matrix CSV; edges are swept by symmetrized rank.')
@schema_option
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True, help='ROC points CSV.')
@click.option('--report', 'report_path', type=click.Path(dir_okay=False), default=None,
              help='Also write the full evaluation report JSON.')
@click.pass_context
def eval_roc_command(ctx, truth_path, model_path, estimate_path, ranks_path, schema_path, out_path, report_path):
    """ROC of an estimated structure against the true graph"""
    sources = [path for path in (model_path, estimate_path, ranks_path) if path]
    if len(sources) != 1:
        raise click.UsageError("give exactly one of --model, --estimate, --ranks")
    start_run(ctx, 'eval-roc', inputs={'truth': truth_path, 'estimate': sources[0]}, outputs={'roc': out_path})

    if model_path:
        combined = read_model(model_path)
        truth = read_edges(truth_path, combined.model.schema)
        report = roc_sweep(combined, truth)
    else:
        if not schema_path:
            raise click.UsageError("--schema is required with --estimate or --ranks")
        schema = read_schema(schema_path)
        truth = read_edges(truth_path, schema)
        if estimate_path:
            report = graph_roc(read_edges(estimate_path, schema), truth)
        else:
            rtilde, names = read_matrix(ranks_path)
            if names != schema.names:
                raise ValidationError("rank matrix names do not match the schema")
            report = importance_roc(rtilde, truth)
    write_roc(report, out_path)
    if report_path:
        write_report(report, report_path)
    click.echo(f"AUC {report.auc:.6f} over {len(report.points)} points")


@click.command('eval-kl')
@click.option('--model', 'model_path', type=click.Path(dir_okay=False), required=True,
              help='Candidate model JSON.')
@click.option('--reference', 'reference_path', type=click.Path(dir_okay=False), default=None,
              help='Reference observations CSV.')
@schema_option
@click.option('--truth', 'truth_path', type=click.Path(dir_okay=False), default=None,
              help='True model JSON to sample the reference from.')
@click.option('-n', '--n', 'n', type=click.IntRange(min=1), default=None, help='Reference sample size.')
@click.option('--seed', type=int, default=None, help='Seed for sampling the reference from --truth.')
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), default=None, help='Result JSON.')
@click.pass_context
def eval_kl_command(ctx, model_path, reference_path, schema_path, truth_path, n, seed, out_path):
    """Empirical non-normalized KL divergence of a model on a reference sample"""
    if bool(reference_path) == bool(truth_path):
        raise click.UsageError("give exactly one of --reference, --truth")
    if truth_path and seed is None:
        raise click.UsageError("sampling the reference from --truth requires --seed")
    start_run(ctx, 'eval-kl', seed=seed, inputs={'model': model_path, 'reference': reference_path or truth_path},
              outputs={'kl': out_path or ''})

    candidate = load_normalized(model_path)
    if truth_path:
        truth = load_normalized(truth_path)
        n = n or get_config().KL_REFERENCE_SIZE
        reference = sample_from_model(truth, truth.decomposition, n, seed)
    else:
        reference = read_dataset(reference_path, schema_path)
        if schema_path is None and reference.schema.names == candidate.schema.names:
            reference = Dataset(schema=candidate.schema, rows=reference.rows)

    notes = []
    kl = empirical_kl(reference, candidate, notes=notes)
    if out_path:
        write_json({'kl': kl, 'reference_size': reference.n, 'notes': notes}, out_path)
    click.echo(f"{kl:.17g}")
