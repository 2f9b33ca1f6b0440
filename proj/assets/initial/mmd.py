import json
import random

# 16 random points as a deterministic low-fitness starting configuration.
rng = random.Random(0)
points = [[rng.gauss(0.0, 1.0), rng.gauss(0.0, 1.0)] for _ in range(16)]

print(json.dumps({"points": points}))
