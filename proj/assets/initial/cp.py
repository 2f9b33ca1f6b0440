import json

# 26 touching circles in a single horizontal row.
n = 26
r = 1.0 / (2 * n)
centers = [[(2 * i + 1) * r, 0.5] for i in range(n)]
radii = [r] * n

print(json.dumps({"centers": centers, "radii": radii}))
