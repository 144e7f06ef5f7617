"""
Who buys, and how often
=======================

Generate a planted-archetype purchase log and look at it the way a shop
manager would: how active is each customer, and do customers with similar
activity levels also buy on the same days?
"""

import numpy as np

from cagru import synth, survey
from cagru.data import build_activity_matrix

# 300 customers over 120 days at 4 shops: loyal near-daily buyers,
# occasional buyers and weekly buyers with a personal weekday.
config = synth.default_config(customers=300, shops=4, days=120, seed=0)
events, labels = synth.generate(config)
matrix = build_activity_matrix(events, synth.customer_ids(300), synth.shop_ids(4), 120)
print(f"{len(events)} purchases, {matrix.n_interactions} (customer, day, shop) cells set")

# Activeness is the share of days with at least one purchase.
values = survey.activeness_all(matrix)
counts, edges = survey.activeness_histogram(values)
for lo, hi, c in zip(edges[:-1], edges[1:], counts):
    print(f"  [{lo:.1f}, {hi:.1f})  {'#' * (c // 4):<45} {c}")

# The mass sits at both ends: many rare buyers, a block of regulars.
print("head-to-tail shape:", survey.is_head_tail(counts))

# Split customers into three engagement levels by activeness alone.
km = survey.kmeans_engagement(values, 3, seed=0)
print("engagement centres:", np.round(km.centers, 3))

# Attendance sequences are the per-day "bought anything" bits. Customers in
# the same engagement group are much closer in Hamming distance than the
# population as a whole.
bits = [survey.attendance_sequence(matrix, u) for u in matrix.customers]
dm = survey.hamming_matrix(bits)
print(f"mean Hamming distance, global {survey.mean_pairwise(dm.values):.2f}, "
      f"within groups {survey.mean_pairwise(dm.values, km.labels):.2f}")

# How well do the engagement groups line up with the planted archetypes?
truth = np.array([labels[u] for u in matrix.customers])
for g in range(3):
    names, n = np.unique(truth[km.labels == g], return_counts=True)
    print(f"  group {g}: " + ", ".join(f"{a} x{b}" for a, b in zip(names, n)))
