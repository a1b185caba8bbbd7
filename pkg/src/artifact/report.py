"""Combined pixel-versus-latent trade-off report."""

from __future__ import annotations

from . import experiments, gaussianity
from .config import ExperimentConfig
from .optimizer import optimize_scale
from .tables import fmt, to_csv

COLUMNS = ("section", "pipeline", "Q", "item", "value")


def tradeoff_report(cfg: ExperimentConfig, Q: int = 1) -> tuple[str, str]:
    rows: list[dict] = []

    def add(section, pipeline, item, value, q=Q):
        rows.append({"section": section, "pipeline": pipeline, "Q": q, "item": item, "value": value})

    s_star, pcs = {}, {}
    for mode in ("pixel", "latent"):
        oc = cfg.build_optimizer(Q=Q, mode=mode)
        res = optimize_scale(oc)
        add("optimize", mode, "Acc_target", oc.Acc_target)
        add("optimize", mode, "iterations", len(res.trace))
        add("optimize", mode, "feasible", int(res.feasible))
        if not res.feasible:
            raise RuntimeError(f"{mode} optimization found no feasible S: {res.diagnostic}")
        s_star[mode] = res.S_star
        add("optimize", mode, "S_star", res.S_star)
        add("optimize", mode, "validation_acc", res.validation_acc)
        add("optimize", mode, "D_KL", gaussianity.analytic_kl(res.S_star, Q))
        pcs[mode] = cfg.build_pipeline(Q=Q, S=res.S_star, mode=mode)

    ratio_s = s_star["latent"] / s_star["pixel"]
    ratio_kl = gaussianity.analytic_kl(s_star["latent"], Q) / gaussianity.analytic_kl(s_star["pixel"], Q)
    add("tradeoff", "both", "S_ratio_latent_over_pixel", ratio_s)
    add("tradeoff", "both", "KL_ratio_latent_over_pixel", ratio_kl)

    seeds = range(cfg.seed, cfg.seed + cfg.attacks.seeds)
    bar = {}
    for r in experiments.robustness_rows(pcs, cfg.attacks.specs, seeds):
        add("robustness", r["pipeline"], f"BAR[{r['attack']}]", r["BAR"])
        bar[(r["pipeline"], r["attack"])] = r["BAR"]

    # residual shift at matched analytic KL: both pipelines at the latent S*
    matched = s_star["latent"]
    for mode in ("pixel", "latent"):
        pc = cfg.build_pipeline(Q=Q, S=matched, mode=mode)
        rep = experiments.residual_report(pc, batch=64, seed=cfg.seed)
        add("residuals", mode, "S", matched)
        add("residuals", mode, "wasserstein1", rep.shift)
        add("residuals", mode, "stego_energy", rep.stego.energy)
        add("residuals", mode, "control_energy", rep.control.energy)

    for sigma in (0.001, 0.1):
        frac = experiments.manifold_reduction(pcs["latent"], sigma, seed=cfg.seed)
        add("manifold", "latent", f"reduction_fraction[awgn:{sigma:g}]", frac)

    anchors = [(q, s) for q, s, _ in experiments.OPTIMIZED_ANCHORS + experiments.SWEEP_ANCHORS]
    for row in experiments.kl_table(anchors):
        add("kl_table", "analytic", f"dkl[S={row['S']:g}]", row["dkl"], row["Q"])

    csv_text = to_csv(rows, COLUMNS)

    md = ["# Pixel vs latent trade-off", "",
          f"Q = {Q}; seeds = {cfg.attacks.seeds}; optimizer batch = {cfg.optimizer.batch}, "
          f"max_iters = {cfg.optimizer.max_iters}", "",
          "| pipeline | S* | D_KL(S*) |", "|---|---|---|"]
    for mode in ("pixel", "latent"):
        md.append(f"| {mode} | {fmt(s_star[mode])} | {fmt(gaussianity.analytic_kl(s_star[mode], Q))} |")
    md += ["", f"S ratio (latent / pixel): {fmt(ratio_s)}", f"KL ratio (latent / pixel): {fmt(ratio_kl)}",
           "", "| attack | pixel BAR | latent BAR |", "|---|---|---|"]
    attacks = [r["item"][4:-1] for r in rows if r["section"] == "robustness" and r["pipeline"] == "pixel"]
    for a in attacks:
        md.append(f"| {a} | {fmt(bar[('pixel', a)])} | {fmt(bar[('latent', a)])} |")
    md.append("")
    return csv_text, "\n".join(md)
