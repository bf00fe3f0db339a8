# commands/model.py
import click

from errors import ValidationError
from services.artifact_service import read_cells, read_model, write_probabilities
from services.data_service import write_dataset
from services.junction_service import marginal_query, normalize, sample_from_model

from commands.options import seed_option, start_run


def load_normalized(model_path):
    model = read_model(model_path).model
    if model.decomposition is None:
        raise ValidationError(f"{model_path} carries no clique decomposition")
    if model.log_partition is None:
        model = normalize(model)
    return model


@click.command('sample')
@click.option('--model', 'model_path', type=click.Path(dir_okay=False), required=True)
@click.option('-n', '--n', 'n', type=click.IntRange(min=0), required=True, help='Observations to draw.')
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True, help='Dataset CSV.')
@seed_option
@click.pass_context
def sample_command(ctx, model_path, n, out_path, seed):
    """Draw observations from a model by junction-tree sampling"""
    start_run(ctx, 'sample', seed=seed, inputs={'model': model_path}, outputs={'data': out_path})
    model = load_normalized(model_path)
    data = sample_from_model(model, model.decomposition, n, seed)
    write_dataset(data, out_path)
    click.echo(f"Sampled {data.n} observations")


@click.command('probs')
@click.option('--model', 'model_path', type=click.Path(dir_okay=False), required=True)
@click.option('--cells', 'cells_path', type=click.Path(dir_okay=False), required=True,
              help='Cells CSV; a header naming a subset of variables asks for marginal probabilities.')
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True, help='Probabilities CSV.')
@click.pass_context
def probs_command(ctx, model_path, cells_path, out_path):
    """Probabilities of full cells or marginal sub-cells"""
    start_run(ctx, 'probs', inputs={'model': model_path, 'cells': cells_path}, outputs={'probabilities': out_path})
    model = load_normalized(model_path)
    variables, cells = read_cells(cells_path, model.schema)
    probabilities = marginal_query(model, model.decomposition, cells, variables=variables)
    names = list(model.schema.names) if variables is None else [model.schema.names[v] for v in variables]
    write_probabilities(cells, names, probabilities, out_path)
    click.echo(f"Wrote {len(probabilities)} probabilities")
