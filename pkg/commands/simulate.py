# commands/simulate.py
import click

from services.artifact_service import write_edges, write_model
from services.data_service import write_dataset, write_schema
from services.junction_service import sample_from_model
from services.simulation_service import random_decomposable_model

from commands.options import seed_option, start_run


@click.command('simulate')
@click.option('--p', 'p', type=click.IntRange(min=1), required=True, help='Number of variables.')
@click.option('--max-clique', type=click.IntRange(min=1), default=3, show_default=True)
@click.option('--levels', type=click.IntRange(min=2), default=2, show_default=True)
@click.option('--strength', type=click.FloatRange(min=0.0), default=1.0, show_default=True,
              help='Standard deviation of the interaction coefficients.')
@click.option('--pairwise-only/--clique-interactions', default=True, show_default=True)
@click.option('--out-model', type=click.Path(dir_okay=False), required=True, help='True model JSON.')
@click.option('--out-graph', type=click.Path(dir_okay=False), required=True, help='True edge list CSV.')
@click.option('--out-schema', type=click.Path(dir_okay=False), default=None, help='Schema CSV.')
@click.option('-n', '--n', 'n', type=click.IntRange(min=0), default=0, help='Also draw this many observations.')
@click.option('--out-data', type=click.Path(dir_okay=False), default=None, help='Dataset CSV for -n draws.')
@seed_option
@click.pass_context
def simulate_command(ctx, p, max_clique, levels, strength, pairwise_only, out_model, out_graph, out_schema,
                     n, out_data, seed):
    """Random decomposable model with its true graph"""
    if n and not out_data:
        raise click.UsageError("-n needs --out-data")
    start_run(ctx, 'simulate', seed=seed, outputs={'model': out_model, 'graph': out_graph})
    model, graph, _ = random_decomposable_model(
        p, max_clique=max_clique, levels=levels, strength=strength, pairwise_only=pairwise_only, seed=seed,
    )
    write_model(model, out_model)
    write_edges(graph, model.schema, out_graph)
    if out_schema:
        write_schema(model.schema, out_schema)
    if out_data:
        # independent stream from the one that drew the model
        data = sample_from_model(model, model.decomposition, n, seed + 1)
        write_dataset(data, out_data)
    click.echo(f"Simulated {p} variables with {graph.number_of_edges()} edges")
