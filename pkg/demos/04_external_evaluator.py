"""Swap the surrogate for an external evaluator over the wire protocol.

The protocol is newline-delimited JSON over a subprocess's stdio (or TCP):
one request line per genome, one response line back, matched by id. Any
process that speaks it can serve fitness; here it is a tiny inline server that
scores genomes by gene count, and in production the trainer bridge
(see bridge/) that actually trains the CNN.
"""

import sys
import tempfile
import textwrap

from evolen import EvolutionConfig, FitnessEvaluator, ProtocolClient
from evolen.fitness import ExternalBackend
from evolen.lengthsearch import make_candidate, partition
import random

SERVER = textwrap.dedent(
    """
    import json, sys, time
    for line in sys.stdin:
        req = json.loads(line)
        t0 = time.time()
        # Count the genes instead of training; a real server builds and fits
        # the model described by req["genome"] under req["budget"].
        genes = sum(len(b["layers"]) for b in req["genome"]["blocks"])
        fitness = min(1.0, 0.05 * genes)
        print(json.dumps({
            "id": req["id"], "status": "ok", "fitness": fitness,
            "loss": 1 - fitness, "num_params": genes, "wall_seconds": time.time() - t0,
        }), flush=True)
    """
)

with tempfile.NamedTemporaryFile("w", suffix=".py", delete=False) as fh:
    fh.write(SERVER)
    server_path = fh.name

cfg = EvolutionConfig(master_seed=1)
client = ProtocolClient(command=(sys.executable, server_path), timeout=10.0)
evaluator = FitnessEvaluator(
    ExternalBackend(client), input_shape=(32, 32, 3), num_classes=10,
    master_seed=cfg.master_seed,
)

genome = make_candidate(partition(24, 4)[1], random.Random(0))
record = evaluator.evaluate(genome, cfg.eval_budget)
print("response from the external evaluator:")
print(" ", record)

# Identical genome + budget -> served from the cache, no second round trip.
again = evaluator.evaluate(genome, cfg.eval_budget)
print("second evaluation came from:", again.source)

evaluator.close()

# The CLI reaches external evaluators the same way:
#   EVOLEN_BACKEND_CMD="python3 -m evolen_bridge --dataset mnist" evolen evolve -c config.json ...
# or with "backend": {"kind": "external", "command": [...]} in the config file.
