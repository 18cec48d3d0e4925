"""Reference external evaluator: builds the CNN a genome JSON describes,
trains it under the requested budget, and reports validation accuracy over
the newline-delimited JSON protocol."""

from .data import DatasetUnavailable, open_dataset
from .genes import GenomeError, parse_genome
from .model import BuildError, BuiltModel, build_model
from .server import handle_request, serve_stdio, serve_tcp
from .trainer import smoke_train, train_and_score

__version__ = "0.1.0"
