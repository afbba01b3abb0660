"""Compare ball-carrier model families with leave-one-week-out validation.

A small planted-signal corpus keeps this to a couple of minutes. The
constant-only model is the baseline every other family should beat.
"""

import warnings

from playvalue.evaluate import lowo_cv, rmse_ratio
from playvalue.featurize import build_feature_table
from playvalue.ingest import extract_ball_carrier_sequences
from playvalue.models import ModelConfig, feature_importance, fit_model
from playvalue.synthgen import GeneratorConfig, planted_signal_corpus

corpus = planted_signal_corpus(GeneratorConfig(seed=2, weeks=3, plays_per_week=40))
sequences, report = extract_ball_carrier_sequences(corpus.plays)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    table = build_feature_table(sequences)
print(f"{len(sequences)} carries, {len(table)} frames, {len(table.columns)} features")

configs = {
    "intercept": ModelConfig("intercept"),
    "lasso": ModelConfig("lasso", {"n_lambda": 20, "k_folds": 3}),
    "gbt": ModelConfig("gbt", {"n_trees": 40}),
    "ffnn": ModelConfig("ffnn", {"hidden": 16, "epochs": 20}),
}
reports = {}
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    for name, cfg in configs.items():
        reports[name] = lowo_cv(table, cfg)

base = reports["intercept"]
print(f"\n{'family':<10} {'RMSE':>7} {'vs baseline':>12}")
for name, rep in reports.items():
    print(f"{name:<10} {rep.overall_rmse:7.2f} {rmse_ratio(rep, base):12.3f}")

# later frames know more about how the carry ends
print("\ngbt RMSE by frames since the carry started")
for row in list(reports["gbt"].by_offset.rows())[:25:3]:
    print(f"  offset {row['offset']:>2}: {row['rmse']:.2f} (n={row['n']})")

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    lasso = fit_model(table, configs["lasso"])
print("\nlargest standardized lasso coefficients:")
for row in feature_importance(lasso, top_k=5):
    print(f"  {row['feature']:<28} {row['sign'] * row['importance']:+.3f}")
