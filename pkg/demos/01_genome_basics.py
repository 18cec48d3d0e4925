"""Walk through the genome encoding: blocks of layer genes, shape inference,
parameter counting, and the canonical JSON form."""

from evolen import Block, Genome, OutOfShape
from evolen import count_params, deserialize, effective_length, infer_shapes, serialize, validate
from evolen.genome import conv, dense, dropout, pool

# A small CNN genotype: two feature blocks, then a dense head.
# Feature blocks hold conv/pool genes; the head ends with the classifier.
g = Genome(
    blocks=(
        Block(kind="feature", layers=(conv(filters=32), pool(mode="max"))),
        Block(kind="feature", layers=(conv(filters=64), conv(filters=64), pool(mode="avg"))),
        Block(kind="head", layers=(dense(128), dropout(), dense(10))),
    )
)

# "Length" counts only conv+pool genes: the head never counts.
print("effective length:", effective_length(g))          # -> 5
print("violations:", validate(g, max_length=8))           # -> []

# Shape inference walks the network: same-padding convs keep H and W,
# each 2x2 stride-2 pool halves them, the first dense gene flattens.
report = infer_shapes(g, (32, 32, 3))
for shape in report.layer_shapes:
    print("  ->", shape)
print("learnable parameters:", report.total_params)
print("count_params agrees:", count_params(g, (32, 32, 3)) == report.total_params)

# Stack too many pools and the feature map collapses below 1x1.
deep = Genome(
    blocks=tuple(
        Block(kind="feature", layers=(conv(16), pool(), pool())) for _ in range(3)
    )
    + (Block(kind="head", layers=(dense(10),)),)
)
try:
    infer_shapes(deep, (32, 32, 3))
except OutOfShape as e:
    print("out of shape:", e)  # the search gives these fitness 0 instead of crashing

# The canonical JSON form is stable: sorted keys, no whitespace, no identity
# fields. It doubles as the fitness-cache key and the wire payload.
text = serialize(g)
print("canonical JSON starts with:", text[:80], "...")
print("round trip is exact:", serialize(deserialize(text)) == text)
