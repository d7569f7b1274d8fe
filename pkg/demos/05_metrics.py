"""Multi-label annotation metrics.

Walks through sample-wise F-measure, concept-wise F-measure, and average
precision on a small score matrix where every quantity can be checked by
hand, including a concept with no positive samples.
"""

import numpy as np

from dmapnet import evaluate

scores = np.array([
    [0.9, -0.3, -0.2],
    [0.5, 0.8, -0.6],
    [0.1, -0.1, -0.4],
    [-0.7, 0.2, -0.1],
])
truth = np.array([
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
])

report = evaluate(scores, truth)

print("per-sample view (predicted set vs true set):")
for i in range(scores.shape[0]):
    pred = sorted(int(k) for k in np.flatnonzero(scores[i] > 0))
    true = sorted(int(k) for k in np.flatnonzero(truth[i] > 0))
    print(f"  sample {i}: predicted {pred}, true {true}")
print(f"MF-S (mean per-sample F): {report.mf_samples:.4f}")

print("\nper-concept view:")
for k in range(scores.shape[1]):
    f = report.per_concept_f[k]
    ap = report.per_concept_ap[k]
    if np.isnan(f):
        print(f"  concept {k}: no positive samples, excluded")
    else:
        print(f"  concept {k}: F {f:.4f}, AP {ap:.4f}")
print(f"MF-C (mean over evaluable concepts): {report.mf_concepts:.4f}")
print(f"mean AP: {report.mean_ap:.4f}")
print(f"excluded concepts: {report.excluded_concepts}")

d = report.to_dict()
print("\nserialized report keys:", sorted(d.keys()))
print("excluded concept metrics serialize as null:", d["per_concept_f"][2])
