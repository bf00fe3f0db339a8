# services/data_service.py
import os
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from config import get_config
from errors import CapacityError, ValidationError
from models.schema import Cell, ContingencyTable, Dataset, VariableSchema, validate_cell

logger = structlog.get_logger(__name__)


def cell_index(schema: VariableSchema, cell: Sequence[int]) -> int:
    """Mixed-radix position of a cell; the last variable varies fastest"""
    cell = validate_cell(schema, cell)
    if not cell:
        return 0
    return int(np.ravel_multi_index(cell, schema.levels))


def cell_of_index(schema: VariableSchema, index: int) -> Cell:
    if not 0 <= int(index) < schema.cell_count:
        raise ValidationError(f"cell index {index} outside [0, {schema.cell_count})")
    if schema.p == 0:
        return ()
    return tuple(int(x) for x in np.unravel_index(int(index), schema.levels))


def all_cells(schema: VariableSchema) -> np.ndarray:
    """Every cell of a small schema as an (m, p) array in canonical order"""
    if schema.p == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.indices(schema.levels).reshape(schema.p, -1).T.astype(np.int64)


def marginal_cell(schema: VariableSchema, cell: Sequence[int], subset: Sequence) -> Cell:
    """Restrict a cell to the variables of `subset`, kept in schema order"""
    cell = validate_cell(schema, cell)
    variables = schema.resolve(subset)
    return tuple(cell[v] for v in variables)


def row_indices(rows: np.ndarray, levels: Tuple[int, ...]) -> np.ndarray:
    """Vectorized cell_index for many (already restricted) rows"""
    if not levels:
        return np.zeros(rows.shape[0], dtype=np.int64)
    return np.ravel_multi_index(tuple(rows.T), levels).astype(np.int64)


def check_capacity(schema: VariableSchema, variables: Sequence[int], max_vars: Optional[int] = None,
                   max_cells: Optional[int] = None) -> int:
    config = get_config()
    max_vars = config.S_MAX if max_vars is None else max_vars
    max_cells = config.MAX_TABLE_CELLS if max_cells is None else max_cells
    size = schema.restrict(variables).cell_count
    if len(variables) > max_vars:
        raise CapacityError(
            f"margin over {len(variables)} variables exceeds the bound of {max_vars}", cost=size
        )
    if size > max_cells:
        raise CapacityError(f"margin needs {size} cells, limit is {max_cells}", cost=size)
    return size


def tabulate(data: Dataset, subset: Sequence, max_vars: Optional[int] = None,
             max_cells: Optional[int] = None) -> ContingencyTable:
    """Count observations on the margin `subset` (collapsing over everything else)"""
    variables = data.schema.resolve(subset)
    size = check_capacity(data.schema, variables, max_vars, max_cells)
    sub_schema = data.schema.restrict(variables)
    indices = row_indices(data.rows[:, list(variables)], sub_schema.levels)
    counts = np.bincount(indices, minlength=size) if data.n else np.zeros(size, dtype=np.int64)
    return ContingencyTable(schema=sub_schema, variables=variables, counts=counts)


def collapse(table: ContingencyTable, keep: Sequence[int]) -> ContingencyTable:
    """Sum a table over every variable not in `keep` (global indices)"""
    keep = tuple(sorted(int(v) for v in keep))
    missing = set(keep) - set(table.variables)
    if missing:
        raise ValidationError(f"cannot collapse onto {keep}: variables {sorted(missing)} not in the table")
    axes = tuple(i for i, v in enumerate(table.variables) if v not in keep)
    counts = table.as_array().sum(axis=axes) if axes else table.as_array()
    local = [table.variables.index(v) for v in keep]
    sub_schema = table.schema.restrict(local)
    return ContingencyTable(schema=sub_schema, variables=keep, counts=np.asarray(counts).ravel())


def sample_multinomial(prob: Sequence[float], n: int, seed: int) -> np.ndarray:
    prob = np.asarray(prob, dtype=float).ravel()
    if n < 0:
        raise ValidationError("sample size must be nonnegative")
    if prob.size == 0 or (prob < 0).any() or not np.isfinite(prob).all():
        raise ValidationError("probabilities must be finite and nonnegative")
    if abs(prob.sum() - 1.0) > 1e-12:
        raise ValidationError(f"probabilities sum to {prob.sum():.15g}, not 1")
    rng = np.random.default_rng(seed)
    return rng.multinomial(int(n), prob / prob.sum()).astype(np.int64)


def dataset_from_counts(schema: VariableSchema, counts: np.ndarray) -> Dataset:
    """Expand a full table of counts into observation rows (canonical cell order)"""
    counts = np.asarray(counts, dtype=np.int64).ravel()
    cells = all_cells(schema)
    return Dataset(schema=schema, rows=np.repeat(cells, counts, axis=0))


def read_schema(path: str) -> VariableSchema:
    """Sidecar schema file: one `name,levels` pair per line"""
    frame = pd.read_csv(path, header=None, names=['name', 'levels'], comment='#', skipinitialspace=True)
    if frame.empty:
        raise ValidationError(f"schema file {path} is empty")
    return VariableSchema(names=tuple(frame['name'].astype(str)), levels=tuple(frame['levels'].astype(int)))


def write_schema(schema: VariableSchema, path: str):
    frame = pd.DataFrame({'name': schema.names, 'levels': schema.levels})
    atomic_write_text(path, frame.to_csv(header=False, index=False))


def read_dataset(path: str, schema_path: Optional[str] = None) -> Dataset:
    """Read observations; non-integer columns are mapped to sorted category codes"""
    frame = pd.read_csv(path)
    if frame.empty and not len(frame.columns):
        raise ValidationError(f"dataset {path} has no header")
    if frame.isna().any().any():
        raise ValidationError(f"dataset {path} has missing values")

    schema = read_schema(schema_path) if schema_path else None
    if schema is not None and list(schema.names) != [str(c) for c in frame.columns]:
        raise ValidationError("schema names do not match the dataset header")

    columns = []
    for name in frame.columns:
        column = frame[name]
        if pd.api.types.is_integer_dtype(column):
            columns.append(column.to_numpy(dtype=np.int64))
        else:
            codes = pd.Categorical(column.astype(str)).codes
            logger.info("categorical_column_recoded", column=str(name))
            columns.append(codes.astype(np.int64))
    rows = np.column_stack(columns) if columns else np.zeros((0, 0), dtype=np.int64)

    if schema is None:
        levels = tuple(int(max(rows[:, v].max() + 1, 2)) if rows.shape[0] else 2 for v in range(rows.shape[1]))
        schema = VariableSchema(names=tuple(str(c) for c in frame.columns), levels=levels)
    logger.debug("dataset_loaded", path=path, n=rows.shape[0], p=schema.p)
    return Dataset(schema=schema, rows=rows)


def write_dataset(data: Dataset, path: str):
    frame = pd.DataFrame(data.rows, columns=list(data.schema.names))
    atomic_write_text(path, frame.to_csv(index=False))


def atomic_write_text(path: str, text: str):
    """Write through a temporary file and rename so readers never see partial output"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp-{os.getpid()}"
    with open(tmp_path, 'w', encoding='utf-8', newline='') as handle:
        handle.write(text)
    os.replace(tmp_path, path)
