# services/artifact_service.py
"""Reading and writing every artifact the command line produces."""
import json
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
import structlog
from marshmallow import EXCLUDE, Schema, fields, validate
from marshmallow import ValidationError as SchemaError

from errors import ValidationError
from models.graph import make_graph, sorted_edges
from models.importance import ImportanceMatrices
from models.loglinear import CombinedModel
from models.plan import DecompositionPlan
from models.report import EvaluationReport
from models.schema import VariableSchema
from services.data_service import atomic_write_text

logger = structlog.get_logger(__name__)

FLOAT_FORMAT = '%.17g'


# ---------------------------------------------------------------------------
# JSON schemas
# ---------------------------------------------------------------------------

class VariableSchemaSchema(Schema):
    names = fields.List(fields.String(), required=True)
    levels = fields.List(fields.Integer(validate=validate.Range(min=2)), required=True)


class SeparatorSchema(Schema):
    vars = fields.List(fields.Integer(validate=validate.Range(min=0)), required=True)
    index = fields.Integer(required=True, validate=validate.Range(min=1))


class DecompositionSchema(Schema):
    cliques = fields.List(fields.List(fields.Integer(validate=validate.Range(min=0))), required=True)
    tree_edges = fields.List(fields.List(fields.Integer(), validate=validate.Length(equal=2)), load_default=list)
    separators = fields.List(fields.Nested(SeparatorSchema), load_default=list)


class TermSchema(Schema):
    vars = fields.List(fields.Integer(validate=validate.Range(min=0)), required=True)
    coefficients = fields.List(fields.Float(allow_nan=False), required=True)


class ProvenanceSchema(Schema):
    vars = fields.List(fields.Integer(), required=True)
    cliques = fields.List(fields.List(fields.Integer()), required=True)
    separators = fields.List(fields.Nested(SeparatorSchema), required=True)
    separator_only = fields.Boolean(required=True)


class ModelSchema(Schema):
    class Meta:
        unknown = EXCLUDE

    schema = fields.Nested(VariableSchemaSchema, required=True)
    terms = fields.List(fields.Nested(TermSchema), required=True)
    log_partition = fields.Float(allow_none=True, load_default=None)
    method = fields.String(allow_none=True, load_default=None)
    diagnostics = fields.Dict(load_default=dict)
    decomposition = fields.Nested(DecompositionSchema, allow_none=True, load_default=None)
    threshold = fields.Float(load_default=0.0)
    provenance = fields.List(fields.Nested(ProvenanceSchema), load_default=list)


class SplitRecordSchema(Schema):
    clique = fields.List(fields.Integer(), required=True)
    separator = fields.List(fields.Integer(), required=True)
    residual = fields.List(fields.Integer(), required=True)


class DeletedEdgeSchema(Schema):
    edge = fields.List(fields.Integer(), required=True, validate=validate.Length(equal=2))
    rank = fields.Float(required=True)


class PlanSchema(Schema):
    smax = fields.Integer(required=True, validate=validate.Range(min=2))
    records = fields.List(fields.Nested(SplitRecordSchema), required=True)
    decomposition = fields.Nested(DecompositionSchema, required=True)
    deleted_edges = fields.List(fields.Nested(DeletedEdgeSchema), load_default=list)
    fill_edges = fields.List(fields.List(fields.Integer(), validate=validate.Length(equal=2)), load_default=list)


class RocPointSchema(Schema):
    threshold = fields.Float(allow_nan=True, required=True)
    fpr = fields.Float(required=True, validate=validate.Range(min=0.0, max=1.0))
    tpr = fields.Float(required=True, validate=validate.Range(min=0.0, max=1.0))
    n_edges = fields.Integer(required=True)


class ReportSchema(Schema):
    points = fields.List(fields.Nested(RocPointSchema), required=True)
    true_edges = fields.Integer(required=True)
    true_gaps = fields.Integer(required=True)
    estimated_edges = fields.Integer(required=True)
    kl = fields.Float(allow_nan=True, allow_none=True, load_default=None)
    auc = fields.Float(allow_none=True, load_default=None)
    notes = fields.List(fields.String(), load_default=list)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dump_json(data) -> str:
    """Deterministic rendering: sorted keys and fixed indentation"""
    return json.dumps(data, sort_keys=True, indent=2, default=_json_default) + '\n'


def write_json(data, path: str):
    atomic_write_text(path, dump_json(data))
    logger.debug("artifact_written", path=path)


def _load(path: str, schema: Schema) -> dict:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            raw = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    try:
        return schema.load(raw)
    except SchemaError as exc:
        raise ValidationError(f"{path} is not a valid artifact: {exc.messages}") from exc


def write_model(model, path: str):
    if not isinstance(model, CombinedModel):
        model = CombinedModel(model=model, provenance={})
    write_json(model.to_dict(), path)


def read_model(path: str) -> CombinedModel:
    return CombinedModel.from_dict(_load(path, ModelSchema()))


def write_plan(plan: DecompositionPlan, path: str):
    write_json(plan.to_dict(), path)


def read_plan(path: str) -> DecompositionPlan:
    return DecompositionPlan.from_dict(_load(path, PlanSchema()))


def write_report(report: EvaluationReport, path: str):
    write_json(report.to_dict(), path)


def read_report(path: str) -> EvaluationReport:
    return EvaluationReport.from_dict(_load(path, ReportSchema()))


# ---------------------------------------------------------------------------
# CSV artifacts
# ---------------------------------------------------------------------------

def _write_frame(frame: pd.DataFrame, path: str, index: bool = False):
    atomic_write_text(path, frame.to_csv(index=index, float_format=FLOAT_FORMAT))


def write_matrix(matrix: np.ndarray, names: Sequence[str], path: str):
    _write_frame(pd.DataFrame(matrix, index=list(names), columns=list(names)), path, index=True)


def read_matrix(path: str) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """Square matrix CSV with variable names on both axes"""
    frame = pd.read_csv(path, index_col=0)
    names = tuple(str(c) for c in frame.columns)
    if tuple(str(i) for i in frame.index) != names:
        raise ValidationError(f"{path}: row and column names differ")
    return frame.to_numpy(dtype=float), names


def write_importance(matrices: ImportanceMatrices, schema: VariableSchema, importance_path: str,
                     ranks_path: str):
    write_matrix(matrices.importance, schema.names, importance_path)
    write_matrix(matrices.symmetric_ranks, schema.names, ranks_path)


def read_edges(path: str, schema: VariableSchema) -> nx.Graph:
    """One `u v` pair per line, comma or whitespace separated, by name or index; a u,v header is optional"""
    try:
        frame = pd.read_csv(path, sep=r'\s*,\s*|\s+', engine='python', header=None, dtype=str,
                            keep_default_na=False)
    except pd.errors.EmptyDataError:
        return make_graph(range(schema.p))
    except pd.errors.ParserError as exc:
        raise ValidationError(f"{path}: malformed edge list: {exc}") from exc
    if frame.shape[1] != 2:
        raise ValidationError(f"{path}: edge list needs exactly two vertices per line")
    rows = [(u.strip(), v.strip()) for u, v in frame.itertuples(index=False)]
    if rows and rows[0] == ('u', 'v'):
        rows = rows[1:]

    def lookup(token: str) -> int:
        if token in schema.names:
            return schema.index_of(token)
        if token.isdigit():
            return schema.resolve([int(token)])[0]
        raise ValidationError(f"{path}: unknown vertex '{token}'")

    return make_graph(range(schema.p), [(lookup(u), lookup(v)) for u, v in rows])


def write_edges(graph: nx.Graph, schema: VariableSchema, path: str):
    edges = sorted_edges(graph)
    frame = pd.DataFrame(
        [(schema.names[u], schema.names[v]) for u, v in edges], columns=['u', 'v'],
    )
    _write_frame(frame, path)


def write_roc(report: EvaluationReport, path: str):
    frame = pd.DataFrame([pt.to_dict() for pt in report.points], columns=['threshold', 'fpr', 'tpr', 'n_edges'])
    _write_frame(frame, path)


def read_roc(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


def read_cells(path: str, schema: VariableSchema) -> Tuple[Optional[Tuple[int, ...]], np.ndarray]:
    """Cells CSV: all schema variables (full cells) or a subset (sub-cells in sorted variable order)"""
    frame = pd.read_csv(path)
    header = [str(c) for c in frame.columns]
    if frame.isna().any().any():
        raise ValidationError(f"{path}: cells must not have missing values")
    if header == list(schema.names):
        return None, frame.to_numpy(dtype=np.int64)
    variables = schema.resolve(header)
    if len(variables) != len(header):
        raise ValidationError(f"{path}: repeated variable in header")
    ordered = [schema.names[v] for v in variables]
    return variables, frame[ordered].to_numpy(dtype=np.int64)


def write_probabilities(cells: np.ndarray, names: List[str], probabilities: np.ndarray, path: str):
    frame = pd.DataFrame(np.asarray(cells, dtype=np.int64).reshape(len(probabilities), -1), columns=names)
    frame['probability'] = np.asarray(probabilities, dtype=float)
    _write_frame(frame, path)
