"""Fit on half the apps, rank users for the held-out half, measure it.

Two scoring regimes are shown.  Standard mode ranks every user for a test
app using all of that app's adopters as evidence (each user's own bit never
feeds its own score).  Future mode hides the later half of the adopters:
only the early half is visible, the late half is what the ranking has to
find.  A seeded random baseline calibrates both.
"""

from __future__ import annotations

import numpy as np

from adoptnet.data import NetworkStack, popularity_counts
from adoptnet.experiments import future_split
from adoptnet.metrics import evaluate_sheets
from adoptnet.predict import PredictionSheet, score_app, score_future
from adoptnet.solver import fit_mle, random_baseline
from adoptnet.synth import SynthSpec, generate

spec = SynthSpec(
    num_users=80,
    num_context_users=40,
    num_apps=120,
    num_networks=2,
    edge_density=(0.06, 0.1),
    planted_net_weights=(1.2, 0.6),
    planted_pop_weight=0.02,
    pop_base_max=10.0,
    susceptibility_rate=10.0,
    seed=21,
)
networks, teacher = generate(spec)
adoptions = teacher.adoptions
stack = NetworkStack(networks=networks.networks,
                     popularity=popularity_counts(adoptions))

rng = np.random.default_rng(0)
order = rng.permutation(adoptions.num_apps)
train, test = order[:60], order[60:]

params, fit = fit_mle(stack, adoptions, train)
print(f"fit: {fit.iterations} iterations, objective {fit.final_objective:.2f}")
print(f"network weights {np.round(params.net_weights, 3)}, "
      f"popularity weight {params.pop_weight:.4f}")

# --- standard mode -------------------------------------------------------
model_sheets, random_sheets = [], []
for a in test:
    a = int(a)
    adopted = adoptions.installed[:, a]
    sheet = score_app(params, stack, adopted, float(stack.popularity[a]), app_id=a)
    model_sheets.append(sheet)
    random_sheets.append(PredictionSheet(
        app_id=a,
        scores=random_baseline(stack.num_users, seed=a),
        evaluated_users=sheet.evaluated_users,
        evidence_users=sheet.evidence_users,
    ))

print("\n== standard mode, 60 held-out apps ==")
for name, sheets in (("model", model_sheets), ("random", random_sheets)):
    rep = evaluate_sheets(sheets, adoptions, ks=(1, 5, 10))
    mp = "  ".join(f"MP@{k} {v:.3f}" for k, v in sorted(rep.mp_at_k.items()))
    print(f"{name:>7}: {mp}  optimal F1 {rep.optimal_f1:.3f}")

# --- future mode ---------------------------------------------------------
# Evidence and the visible popularity are the early adopters alone; early
# adopters drop out of the ranked set.
halves = future_split(adoptions)
model_sheets, random_sheets, skipped = [], [], 0
for a in test:
    a = int(a)
    g1, g2 = halves[a]
    if g2.size == 0:
        skipped += 1
        continue
    early = np.zeros(stack.num_users, dtype=bool)
    early[g1] = True
    sheet = score_future(params, stack, early, float(g1.size), app_id=a)
    model_sheets.append(sheet)
    random_sheets.append(PredictionSheet(
        app_id=a,
        scores=random_baseline(stack.num_users, seed=a),
        evaluated_users=sheet.evaluated_users,
        evidence_users=sheet.evidence_users,
    ))

print(f"\n== future mode, {len(model_sheets)} apps ({skipped} without late adopters) ==")
for name, sheets in (("model", model_sheets), ("random", random_sheets)):
    rep = evaluate_sheets(sheets, adoptions, ks=(3, 5), skipped_apps=skipped)
    mp = "  ".join(f"MP@{k} {v:.3f}" for k, v in sorted(rep.mp_at_k.items()))
    print(f"{name:>7}: {mp}  optimal F1 {rep.optimal_f1:.3f}")
