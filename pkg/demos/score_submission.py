# Scoring a detection submission: image-level AUC, FROC, and the leaderboard metric.
import json
import sys
from pathlib import Path

from nodulebench import evaluate, io, sensitivity_at
from nodulebench.harness import build_leaderboard, render_curves_svg
from nodulebench.metrics import EvalReport

here = Path(__file__).resolve().parent
fixtures = here.parent / "tests" / "fixtures"
out = here / "out"
out.mkdir(exist_ok=True)

preds = io.load_predictions(fixtures / "mixed_predictions.json")
gts = io.load_annotations(fixtures / "mixed_annotations.json")
print(f"{len(gts)} images, {sum(a.is_positive for a in gts)} with nodules")

report = evaluate(preds, gts)
print(json.dumps(report.to_dict(), indent=2))

# the FROC curve itself, one row per distinct probability
for fp, sens, thr in report.froc.points:
    print(f"  t={thr:<5} fp/img={fp:.3f} sens={sens:.3f}")

# step readout instead of interpolation
print("S(0.125) step:", sensitivity_at(report.froc, 0.125, mode="step"))

(out / "curves.svg").write_text(render_curves_svg(report))

# rank a table of (AUC, S(0.25)) summaries the same way
summaries = {"D1": (0.868, 0.750), "D2": (0.862, 0.723), "D3": (0.833, 0.704), "DB": (0.816, 0.635)}
rows = build_leaderboard([(k, EvalReport.from_summary(*v)) for k, v in summaries.items()])
for r in rows:
    print(r.rank, r.name, round(r.report.rank_metric, 5))

sys.exit(0)
