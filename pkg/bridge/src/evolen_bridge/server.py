"""The evaluator server: newline-delimited JSON requests in, one response per
request out, over stdio or a TCP socket.

A bad request produces a status=error response for that id; nothing a client
sends can take the process down.
"""

from __future__ import annotations

import json
import socket
import sys
import time

import torch

from .data import DatasetUnavailable
from .model import BuildError, build_model
from .trainer import train_and_score


def handle_request(line: str, dataset) -> dict:
    try:
        request = json.loads(line)
    except json.JSONDecodeError:
        return {"id": "", "status": "error", "message": "request is not valid JSON"}
    rid = request.get("id")
    if not isinstance(rid, str):
        return {"id": "", "status": "error", "message": "request has no string id"}
    # Unknown request fields are ignored by contract; only these are read.
    try:
        input_shape = tuple(request["input_shape"])
        num_classes = int(request["num_classes"])
        budget = request.get("budget", {})
        seed = int(request.get("seed", 0))
        genome = request["genome"]
    except (KeyError, TypeError, ValueError) as e:
        return {"id": rid, "status": "error", "message": f"malformed request: {e}"}

    start = time.time()
    try:
        torch.manual_seed(seed)
        model = build_model(genome, input_shape, num_classes)
        x, y = dataset.arrays(input_shape, num_classes)
        fitness, loss = train_and_score(model, x, y, budget, seed=seed)
    except (BuildError, DatasetUnavailable) as e:
        return {"id": rid, "status": "error", "message": str(e)}
    except Exception as e:  # noqa: BLE001 - one request must never kill the loop
        return {"id": rid, "status": "error", "message": f"{type(e).__name__}: {e}"}
    return {
        "id": rid,
        "status": "ok",
        "fitness": fitness,
        "loss": loss,
        "num_params": model.num_params,
        "wall_seconds": time.time() - start,
    }


def serve_stream(lines_in, out, dataset) -> None:
    for line in lines_in:
        line = line.strip()
        if not line:
            continue
        response = handle_request(line, dataset)
        out.write(json.dumps(response) + "\n")
        out.flush()


def serve_stdio(dataset) -> None:
    serve_stream(sys.stdin, sys.stdout, dataset)


def serve_tcp(host: str, port: int, dataset) -> None:
    with socket.create_server((host, port)) as server:
        print(f"listening on {host}:{server.getsockname()[1]}", file=sys.stderr)
        while True:
            conn, _ = server.accept()
            with conn:
                reader = conn.makefile("r", encoding="utf-8")
                writer = conn.makefile("w", encoding="utf-8")
                serve_stream(reader, writer, dataset)
