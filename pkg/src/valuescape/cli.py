"""Command-line pipeline: landscape, build-dataset, eval-numeric, eval-open, judge, compare, report.

Every command reads a JSON run config (``--config``) and writes into its
``output_dir``.  Model replies are persisted to append-only run logs named by
the hash of the settings that produced them, so later commands (and
``--replay``) never need the network.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ProviderConfig, RunConfig, load_config
from .dataset import EVAL_OOD, TEMPLATE_VERSION, TRAIN, DatasetManifest, build_splits, export_training_records, import_training_records
from .errors import CaseSetMismatchError, ConfigError, EmptyInputError, EmptyResponseError, SampleSetMismatchError, SingletonStratumError, ValuescapeError
from .gateway import CompletionRequest, MockProvider, OpenAIChatProvider, ReplayProvider, RunLog, content_hash, run_batch, run_logged
from .judge import CRITERIA, JudgeCase, aggregate_win_rates, build_judge_prompt, judge_cases, try_parse
from .landscape import category_report, conflict_exemplars, label_stability, landscape_scores, overall_summary
from .numeric_eval import OVERALL, STRATUM, SUBGROUP, aggregate, metrics_by_stratum, score_records
from .reports import fmt, read_csv, signed, text_table, write_csv, write_json, write_text
from .stats import improvement_ranks, paired_bootstrap_ci, stratum_disparity
from .stratify import enumerate_strata, opinion_matrix
from .survey import apply_filters, load_codebook, load_responses, parse_exclusions

log = logging.getLogger("valuescape")

REFUSAL_TEXT = "I cannot answer that request."
TIE_VERDICT = 'Both responses are comparable.\n{"persona_winner": "Tie", "value_winner": "Tie", "overall_winner": "Tie"}'
FIRST_VERDICT = 'Response A is stronger.\n{"persona_winner": "A", "value_winner": "A", "overall_winner": "A"}'
DISPARITY_METRICS = ("accuracy", "nmae", "refusal_rate")


# --- shared loading --------------------------------------------------------


def load_survey(cfg: RunConfig):
    codebook = load_codebook(cfg.codebook)
    table = load_responses(cfg.responses, codebook, axes=cfg.axes)
    if not table.respondents:
        raise ConfigError(f"{cfg.responses} holds no respondents")
    return apply_filters(table, parse_exclusions(cfg.exclusions))


def build_matrix(cfg: RunConfig, table):
    return opinion_matrix(table, enumerate_strata(cfg.axes), cfg.min_n)


def dataset_dir(cfg):
    return Path(cfg.output_dir) / "dataset"


def run_dir(cfg, label):
    return Path(cfg.output_dir) / "runs" / label


def load_split(cfg: RunConfig, split: str) -> DatasetManifest:
    path = dataset_dir(cfg) / f"{split}.jsonl"
    if not path.exists():
        raise ConfigError(f"{path} not found; run build-dataset first")
    return import_training_records(path)


def load_samples(cfg: RunConfig, split: str) -> list:
    if split == "all":
        return [*load_split(cfg, TRAIN).records, *load_split(cfg, EVAL_OOD).records]
    return list(load_split(cfg, split).records)


# --- providers -------------------------------------------------------------


def _mock_script(p: ProviderConfig, task: str, samples):
    if p.mock_mode == "script":
        return json.loads(Path(p.script).read_text(encoding="utf-8")), None
    if p.mock_mode == "refuse":
        return {}, REFUSAL_TEXT
    if task == "judge":
        return {}, FIRST_VERDICT if p.mock_mode == "first" else TIE_VERDICT
    if task == "open":
        return {s.sample_id: f'Speaking as a {s.persona_text}, I would lean towards "{s.gold_stance_label}".'
                for s in samples}, None
    return {s.sample_id: f"Answer: {s.gold_modal_code}" for s in samples}, None


def make_provider(p: ProviderConfig, task: str, samples=()):
    if p.kind == "openai":
        return OpenAIChatProvider(p.base_url, api_key_env=p.api_key_env, timeout=p.timeout,
                                  requests_per_minute=p.requests_per_minute, max_retries=p.max_retries)
    script, default = _mock_script(p, task, samples)
    return MockProvider(script, default=default, max_retries=p.max_retries)


def run_hash(p: ProviderConfig, task: str, split: str) -> str:
    return content_hash({"provider": p.identity(), "task": task, "split": split, "templates": TEMPLATE_VERSION})


def _complete(cfg, provider_name, task, split, requests, log_path, replay, samples=()):
    p = cfg.provider(provider_name)
    h = run_hash(p, task, split)
    run_log = RunLog(Path(log_path.parent) / f"{log_path.name}-{h}.jsonl", h)
    if replay:
        if not run_log.path.exists():
            raise ConfigError(f"no stored run log {run_log.path} to replay")
        return run_batch(ReplayProvider(run_log.load()), requests, cfg.parallelism), run_log
    provider = make_provider(p, task, samples)
    return run_logged(provider, requests, run_log, cfg.parallelism), run_log


def _requests(cfg, p: ProviderConfig, samples, open_ended=False):
    out = []
    for s in samples:
        prompts = s.open_prompts if open_ended else s.prompts
        out.append(CompletionRequest(prompts.system_prompt, prompts.user_prompt, p.temperature, p.max_tokens,
                                     p.model, s.sample_id))
    return out


# --- landscape -------------------------------------------------------------


def cmd_landscape(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir) / "landscape"
    table = load_survey(cfg)
    matrix = build_matrix(cfg, table)
    questions = table.active_questions
    rows = landscape_scores(matrix, questions, cfg.denominators)
    category_of = {q.question_id: q.category for q in table.questions}
    dens = list(cfg.denominators)

    paths = {
        "filter_log": write_json(out / "filter_log.json", table.provenance),
        "scores": write_csv(out / "scores.csv",
                            ["question_id", "category", "stratum", "n_valid", "n_distinct_modes",
                             *[f"mds_{d}" for d in dens], "wasserstein", "pair_count"],
                            ([r.question_id, category_of[r.question_id], r.stratum, r.n_valid, r.n_distinct_modes,
                              *[r.diversity[d] for d in dens], r.wasserstein, r.pair_count] for r in rows)),
    }
    matrix.write_csv(out / "opinions.csv")
    paths["opinions"] = out / "opinions.csv"

    per_den = {d: [(r.question_id, r.diversity[d]) for r in rows] for d in dens}
    reports = {d: category_report(per_den[d], table.questions) for d in dens}
    overall = {d: overall_summary(per_den[d]) for d in dens}
    primary = dens[0]
    avg = {d: {r.category: r.avg_diversity for r in reports[d]} for d in dens}
    cat_rows = [[r.category, r.total_questions, r.unanimous_questions, *[avg[d][r.category] for d in dens]]
                for r in reports[primary]]
    o = overall[primary]
    cat_rows.append([o.category, o.total_questions, o.unanimous_questions, *[overall[d].avg_diversity for d in dens]])
    header = ["category", "total_questions", "unanimous_questions", *[f"avg_mds_{d}" for d in dens]]
    paths["categories"] = write_csv(out / "categories.csv", header, cat_rows)
    paths["categories_txt"] = write_text(out / "categories.txt", text_table(
        ["Category", "Total Qs", "Unanimous Qs", *[f"Avg. MDS ({d})" for d in dens]], cat_rows,
        title="Value conflict by question category"))

    high, zero = conflict_exemplars(matrix, questions, per_den[primary], cfg.exemplar_stratum)
    lines = [f"Conflict exemplars ({cfg.exemplar_stratum}, {primary})", ""]
    for title, group in (("Highest conflict", high), ("Full consensus", zero)):
        lines.append(title)
        for ex in group:
            lines.append(f"  {ex.question.question_id} [{ex.question.category}] mean MDS {ex.mean_score:.3f}")
            lines.append(f"    {ex.question.text}")
            for code, labels in ex.modal_groups.items():
                lines.append(f"    {code} ({ex.question.label_for(code)}): {', '.join(labels)}")
        lines.append("")
    paths["exemplars"] = write_text(out / "exemplars.txt", "\n".join(lines))

    try:
        ls = label_stability(matrix.valid_cells())
        stability = {"rho": ls.rho, "p_value": ls.p_value, "n_cells": ls.n_pairs, "method": ls.method}
    except ValuescapeError as exc:
        stability = {"error": str(exc)}
    paths["label_stability"] = write_json(out / "label_stability.json", stability)
    return paths


# --- dataset ---------------------------------------------------------------


def cmd_build_dataset(cfg: RunConfig) -> dict:
    out = dataset_dir(cfg)
    table = load_survey(cfg)
    matrix = build_matrix(cfg, table)
    manifest = build_splits(matrix, table.questions, cfg.train_strata, cfg.ood_strata, min_n=cfg.min_n,
                            exclusions=cfg.exclusions, nationality=cfg.nationality,
                            display_forms=cfg.display_forms, axes=cfg.axes)
    if not manifest.records:
        raise EmptyInputError("no valid (question, subgroup) cells; nothing to build")
    paths = {}
    for split in (TRAIN, EVAL_OOD):
        part = manifest.split(split)
        if part.records:
            paths[split] = export_training_records(part, out / f"{split}.jsonl")

    subgroup_counts = manifest.subgroup_counts()
    rows = []
    for split, names in ((TRAIN, cfg.train_strata), (EVAL_OOD, cfg.ood_strata)):
        for name in names:
            n_sub = sum(1 for (s, _) in subgroup_counts if s == name)
            rows.append([split, name, n_sub, manifest.counts.get(name, 0)])
        rows.append([split, "TOTAL", sum(r[2] for r in rows if r[0] == split and r[1] != "TOTAL"),
                     sum(r[3] for r in rows if r[0] == split and r[1] != "TOTAL")])
    paths["counts"] = write_csv(out / "counts.csv", ["split", "stratum", "subgroups", "samples"], rows)
    paths["counts_txt"] = write_text(out / "counts.txt", text_table(
        ["Split", "Stratum", "# Subgroups", "# Samples"], rows, title="Dataset composition"))
    paths["manifest"] = write_json(out / "manifest.json", {"config": manifest.config, "counts": manifest.counts,
                                                           "total": manifest.total})
    return paths


# --- numerical evaluation --------------------------------------------------


def _disparities(metrics_sub):
    out = {}
    grouped = metrics_by_stratum(metrics_sub)
    for metric in DISPARITY_METRICS:
        try:
            out[metric] = stratum_disparity(grouped, metric)
        except (SingletonStratumError, EmptyInputError) as exc:
            log.info("no %s disparity: %s", metric, exc)
    return out


def _metric_rows(metrics):
    return [[m.group, m.stratum, m.n_samples, m.accuracy, m.nmae, m.refusal_rate] for m in metrics]


def score_run(cfg: RunConfig, label: str):
    """Re-score a stored numerical run from its manifest split and run log."""
    meta_path = run_dir(cfg, label) / "numeric.json"
    if not meta_path.exists():
        raise ConfigError(f"no numerical run {label!r} (missing {meta_path})")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    samples = load_samples(cfg, meta["split"])
    stored = RunLog(run_dir(cfg, label) / meta["log"], meta["config_hash"]).load()
    results = [stored[s.sample_id] for s in samples if s.sample_id in stored]
    return samples, score_records(samples, results, cfg.strict_parsing)


def cmd_eval_numeric(cfg: RunConfig, label: str, provider: str = "evaluatee", split: str = EVAL_OOD,
                     replay: bool = False) -> dict:
    out = run_dir(cfg, label)
    samples = load_samples(cfg, split)
    p = cfg.provider(provider)
    requests = _requests(cfg, p, samples)
    results, run_log = _complete(cfg, provider, "numeric", split, requests, out / "numeric", replay, samples)
    failed = sum(not r.ok for r in results)
    if failed:
        log.warning("%d of %d requests returned no usable text", failed, len(results))
    write_json(out / "numeric.json", {"label": label, "provider": provider, "split": split,
                                      "config_hash": run_log.config_hash, "log": run_log.path.name})
    records = score_records(samples, results, cfg.strict_parsing)
    return write_numeric_reports(cfg, out, label, records)


def write_numeric_reports(cfg, out, label, records) -> dict:
    paths = {"records": write_csv(out / "records.csv",
                                  ["sample_id", "stratum", "subgroup", "question_id", "gold", "predicted",
                                   "refusal_reason", "correct", "abs_err_norm"],
                                  ([r.sample.sample_id, r.sample.stratum, r.sample.subgroup.label,
                                    r.sample.question_id, r.sample.gold_modal_code, r.parsed.code,
                                    r.parsed.reason, r.correct, r.abs_err_norm] for r in records))}
    header = ["group", "stratum", "n_samples", "accuracy", "nmae", "refusal_rate"]
    by = {g: aggregate(records, g, cfg.refusals_count_as_incorrect) for g in (SUBGROUP, STRATUM, OVERALL)}
    for g, metrics in by.items():
        paths[f"metrics_{g}"] = write_csv(out / f"metrics_{g}.csv", header, _metric_rows(metrics))
    disp = _disparities(by[SUBGROUP])
    disp_rows = []
    for metric, rep in disp.items():
        disp_rows.extend([metric, s.stratum, s.n_subgroups, s.normalized_range, s.cv] for s in rep.strata)
        disp_rows.append([metric, "MODEL", len(rep.strata), rep.normalized_range, rep.cv])
    paths["disparity"] = write_csv(out / "disparity.csv",
                                   ["metric", "stratum", "n_subgroups", "normalized_range", "cv"], disp_rows)

    o = by[OVERALL][0]
    acc_disp = disp.get("accuracy")
    lines = [text_table(["Run", "Accuracy", "NMAE", "Refusal rate", "Norm. Range", "CV"],
                        [[label, o.accuracy, o.nmae, o.refusal_rate,
                          acc_disp.normalized_range if acc_disp else None, acc_disp.cv if acc_disp else None]],
                        title=f"Structured numerical evaluation ({o.n_samples} samples)"),
             text_table(["Stratum", "N", "Accuracy", "NMAE", "Refusal rate"],
                        [[m.group, m.n_samples, m.accuracy, m.nmae, m.refusal_rate] for m in by[STRATUM]],
                        title="By stratum")]
    paths["report"] = write_text(out / "report.txt", "\n".join(lines))
    paths["summary"] = write_json(out / "summary.json", {
        "label": label, "n_samples": o.n_samples, "accuracy": o.accuracy, "nmae": o.nmae,
        "refusal_rate": o.refusal_rate,
        "disparity": {m: {"normalized_range": r.normalized_range, "cv": r.cv} for m, r in disp.items()},
    })
    return paths


# --- open-ended generation and judging -------------------------------------


def _open_samples(cfg, split):
    samples = load_samples(cfg, split)
    if cfg.open_ended_limit is not None:
        samples = samples[:cfg.open_ended_limit]
    return samples


def cmd_eval_open(cfg: RunConfig, label: str, provider: str = "evaluatee", split: str = EVAL_OOD,
                  replay: bool = False) -> dict:
    out = run_dir(cfg, label)
    samples = _open_samples(cfg, split)
    p = cfg.provider(provider)
    results, run_log = _complete(cfg, provider, "open", split, _requests(cfg, p, samples, open_ended=True),
                                 out / "open", replay, samples)
    meta = write_json(out / "open.json", {"label": label, "provider": provider, "split": split,
                                          "config_hash": run_log.config_hash, "log": run_log.path.name,
                                          "cases": [s.sample_id for s in samples]})
    return {"meta": meta, "log": run_log.path,
            "statuses": write_csv(out / "open_statuses.csv", ["case_id", "status", "attempts"],
                                  ([r.request_id, r.status, r.attempts] for r in results))}


def _open_responses(cfg, label):
    meta_path = run_dir(cfg, label) / "open.json"
    if not meta_path.exists():
        raise ConfigError(f"no open-ended run {label!r} (missing {meta_path})")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    stored = RunLog(run_dir(cfg, label) / meta["log"], meta["config_hash"]).load()
    return meta, {cid: stored[cid].raw_text if cid in stored and stored[cid].ok else "" for cid in meta["cases"]}


def cmd_judge(cfg: RunConfig, evaluatee: str, baseline: str, provider: str = "judge", replay: bool = False) -> dict:
    out = Path(cfg.output_dir) / "judge" / f"{evaluatee}_vs_{baseline}"
    meta_e, resp_e = _open_responses(cfg, evaluatee)
    meta_b, resp_b = _open_responses(cfg, baseline)
    if set(resp_e) != set(resp_b):
        raise CaseSetMismatchError(f"{evaluatee} and {baseline} cover different cases "
                                   f"({len(set(resp_e) ^ set(resp_b))} differ)")
    codebook = {q.question_id: q for q in load_codebook(cfg.codebook)}
    samples = {s.sample_id: s for s in load_samples(cfg, meta_e["split"])}
    case_ids = meta_e["cases"]
    paths = {}

    if evaluatee == baseline:
        summary = aggregate_win_rates([], evaluatee, self_comparison=True)
        case_results = []
    else:
        cases, requests, excluded = [], [], 0
        p = cfg.provider(provider)
        for cid in case_ids:
            s = samples[cid]
            case = JudgeCase(cid, s.persona_text, codebook[s.question_id], s.gold_stance_label, resp_e[cid], resp_b[cid])
            try:
                prompts = [build_judge_prompt(case, True, cfg.nationality), build_judge_prompt(case, False, cfg.nationality)]
            except EmptyResponseError:
                excluded += 1
                continue
            cases.append(case)
            for n, prompt in enumerate(prompts, start=1):
                requests.append(CompletionRequest("", prompt, p.temperature, p.max_tokens, p.model, f"{cid}::{n}"))
        results, run_log = _complete(cfg, provider, "judge", f"{evaluatee}|{baseline}", requests,
                                     out / "judge", replay)
        texts = {}
        for r in results:
            cid, n = r.request_id.rsplit("::", 1)
            texts[(cid, int(n))] = r.raw_text if r.ok else None
        case_results = judge_cases(cases, texts)
        summary = aggregate_win_rates(case_results, evaluatee, n_excluded=excluded)
        rows = []
        for case, res in zip(cases, case_results):
            v1, v2 = try_parse(texts.get((case.case_id, 1))), try_parse(texts.get((case.case_id, 2)))
            rows.append([case.case_id,
                         *[v.winner(c) if v else "" for v in (v1, v2) for c in CRITERIA],
                         *[res.wr[c] if res else None for c in CRITERIA],
                         "excluded" if res is None else ("flagged" if res.flagged else "")])
        paths["cases"] = write_csv(out / "cases.csv", ["case_id", *[f"pass{n}_{c}" for n in (1, 2) for c in CRITERIA],
                                                       *[f"wr_{c}" for c in CRITERIA], "note"], rows)
        paths["log"] = run_log.path

    row = [evaluatee, baseline, *[summary.wr[c] for c in CRITERIA], summary.n_cases, summary.n_flagged, summary.n_excluded]
    header = ["evaluatee", "baseline", *[f"wr_{c}" for c in CRITERIA], "n_cases", "n_flagged", "n_excluded"]
    paths["wr"] = write_csv(out / "wr.csv", header, [row])
    paths["wr_txt"] = write_text(out / "wr.txt", text_table(
        ["Evaluatee", "Baseline", "Persona WR", "Value WR", "Overall WR", "Cases", "Flagged", "Excluded"], [row],
        title="Open-ended win rates"))
    return paths


# --- comparison ------------------------------------------------------------


def cmd_compare(cfg: RunConfig, base: str, treat: str) -> dict:
    out = Path(cfg.output_dir) / "compare" / f"{base}_vs_{treat}"
    _, rec_b = score_run(cfg, base)
    _, rec_t = score_run(cfg, treat)
    ids_b = [r.sample.sample_id for r in rec_b]
    ids_t = [r.sample.sample_id for r in rec_t]
    if set(ids_b) != set(ids_t):
        raise SampleSetMismatchError(f"{base} and {treat} were scored on different samples")
    by_t = {r.sample.sample_id: r for r in rec_t}
    paired_base, paired_treat = rec_b, [by_t[i] for i in ids_b]

    overall_rows = []
    ci_args = dict(resamples=cfg.resamples, level=cfg.level, seed=cfg.seed)
    acc = paired_bootstrap_ci([float(r.correct) for r in paired_base], [float(r.correct) for r in paired_treat], **ci_args)
    both = [(b, t) for b, t in zip(paired_base, paired_treat) if b.abs_err_norm is not None and t.abs_err_norm is not None]
    ref = paired_bootstrap_ci([float(b.refused) for b in paired_base], [float(t.refused) for t in paired_treat], **ci_args)
    mb = aggregate(paired_base, OVERALL)[0]
    mt = aggregate(paired_treat, OVERALL)[0]
    overall_rows.append(["accuracy", mb.accuracy, mt.accuracy, acc.point_delta, acc.lo, acc.hi, acc.n])
    if both:
        nm = paired_bootstrap_ci([b.abs_err_norm for b, _ in both], [t.abs_err_norm for _, t in both], **ci_args)
        overall_rows.append(["nmae", sum(b.abs_err_norm for b, _ in both) / len(both),
                             sum(t.abs_err_norm for _, t in both) / len(both), nm.point_delta, nm.lo, nm.hi, nm.n])
    overall_rows.append(["refusal_rate", mb.refusal_rate, mt.refusal_rate, ref.point_delta, ref.lo, ref.hi, ref.n])
    header = ["metric", "base", "treat", "delta", "ci_lo", "ci_hi", "n_pairs"]
    paths = {"overall": write_csv(out / "overall.csv", header, overall_rows)}

    sub_b = aggregate(paired_base, SUBGROUP)
    sub_t = {(m.stratum, m.group): m for m in aggregate(paired_treat, SUBGROUP)}
    sub_rows = []
    for stratum, group in metrics_by_stratum(sub_b).items():
        pre_acc = {m.group: m.accuracy for m in group}
        post_acc = {g: sub_t[(stratum, g)].accuracy for g in pre_acc}
        acc_rank = improvement_ranks(pre_acc, post_acc, higher_is_better=True)
        pre_nm = {m.group: m.nmae for m in group if m.nmae is not None and sub_t[(stratum, m.group)].nmae is not None}
        post_nm = {g: sub_t[(stratum, g)].nmae for g in pre_nm}
        nm_rank = improvement_ranks(pre_nm, post_nm, higher_is_better=False) if pre_nm else {}
        for m in sorted(group, key=lambda m: (m.accuracy, m.group)):
            t = sub_t[(stratum, m.group)]
            a = acc_rank[m.group]
            n = nm_rank.get(m.group)
            sub_rows.append([stratum, m.group, m.n_samples, m.accuracy, t.accuracy, a.delta, a.rank,
                             m.nmae, t.nmae, n.delta if n else None, n.rank if n else None])
    paths["subgroups"] = write_csv(out / "subgroups.csv",
                                   ["stratum", "subgroup", "n", "base_accuracy", "treat_accuracy", "delta_accuracy",
                                    "rank_accuracy", "base_nmae", "treat_nmae", "delta_nmae", "rank_nmae"], sub_rows)

    disp_b = _disparities(sub_b)
    disp_t = _disparities(list(sub_t.values()))
    disp_rows = []
    for metric in DISPARITY_METRICS:
        if metric in disp_b and metric in disp_t:
            for sb, st in zip(disp_b[metric].strata, disp_t[metric].strata):
                disp_rows.append([metric, sb.stratum, sb.normalized_range, st.normalized_range, sb.cv, st.cv])
            disp_rows.append([metric, "MODEL", disp_b[metric].normalized_range, disp_t[metric].normalized_range,
                              disp_b[metric].cv, disp_t[metric].cv])
    paths["disparity"] = write_csv(out / "disparity.csv",
                                   ["metric", "stratum", "base_range", "treat_range", "base_cv", "treat_cv"], disp_rows)

    lines = [text_table(header, overall_rows, title=f"{base} -> {treat}: paired bootstrap "
                        f"({cfg.resamples} resamples, {cfg.level:.0%} level, seed {cfg.seed})")]
    lines.append(text_table(["Stratum", "Subgroup", "N", "Base acc", "Treat acc", "Delta"],
                            [[r[0], r[1], r[2], r[3], r[4], f"{signed(r[5])}^{r[6]}"] for r in sub_rows],
                            title="Per-subgroup accuracy (superscript = improvement rank within stratum)"))
    if disp_rows:
        lines.append(text_table(["Metric", "Stratum", "Base range", "Treat range", "Base CV", "Treat CV"], disp_rows,
                                title="Disparity before and after"))
    paths["report"] = write_text(out / "report.txt", "\n".join(lines))
    return paths


# --- roll-up report --------------------------------------------------------


def cmd_report(cfg: RunConfig) -> dict:
    root = Path(cfg.output_dir)
    wr = {}
    for f in sorted((root / "judge").glob("*/wr.csv")):
        for row in read_csv(f):
            wr[row["evaluatee"]] = row
    rows = []
    for meta_path in sorted((root / "runs").glob("*/summary.json")):
        s = json.loads(meta_path.read_text(encoding="utf-8"))
        d = s["disparity"].get("accuracy", {})
        w = wr.get(s["label"], {})
        rows.append([s["label"], s["n_samples"], fmt(s["accuracy"], 3), fmt(s["nmae"], 3), fmt(s["refusal_rate"], 3),
                     fmt(d.get("normalized_range"), 3), fmt(d.get("cv"), 3),
                     *[fmt(float(w[f"wr_{c}"]), 3) if w else "" for c in CRITERIA]])
    if not rows:
        raise ConfigError(f"no evaluated runs under {root / 'runs'}")
    header = ["run", "n_samples", "accuracy", "nmae", "refusal_rate", "norm_range", "cv", "wr_persona", "wr_value", "wr_overall"]
    return {"report": write_csv(root / "report.csv", header, rows),
            "report_txt": write_text(root / "report.txt", text_table(
                ["Run", "N", "Accuracy", "NMAE", "Refusal", "Norm. Range", "CV", "Persona WR", "Value WR", "Overall WR"],
                rows, title="Model summary"))}


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="valuescape", description="Survey value-conflict analysis and persona evaluation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--output-dir", type=Path)
        p.add_argument("--min-n", type=int)
        p.add_argument("--parallelism", type=int)
        p.add_argument("--seed", type=int)
        return p

    common(sub.add_parser("landscape", help="value-conflict scores and category summary"))
    common(sub.add_parser("build-dataset", help="render prompts and write train/OOD splits"))
    for name in ("eval-numeric", "eval-open"):
        p = common(sub.add_parser(name, help=f"{name.split('-')[1]} evaluation run"))
        p.add_argument("--run", help="run label (defaults to the provider name)")
        p.add_argument("--provider", default="evaluatee")
        p.add_argument("--split", default=EVAL_OOD, choices=[TRAIN, EVAL_OOD, "all"])
        p.add_argument("--replay", action="store_true", help="serve replies from the stored run log only")
    p = common(sub.add_parser("judge", help="pairwise win rates of two open-ended runs"))
    p.add_argument("--evaluatee", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--provider", default="judge")
    p.add_argument("--replay", action="store_true")
    p = common(sub.add_parser("compare", help="deltas, bootstrap CIs, ranks and disparity between two runs"))
    p.add_argument("--base", required=True)
    p.add_argument("--treat", required=True)
    common(sub.add_parser("report", help="summary table over all runs"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, {"output_dir": args.output_dir, "min_n": args.min_n,
                                        "parallelism": args.parallelism, "seed": args.seed})
        if args.command == "landscape":
            paths = cmd_landscape(cfg)
        elif args.command == "build-dataset":
            paths = cmd_build_dataset(cfg)
        elif args.command == "eval-numeric":
            paths = cmd_eval_numeric(cfg, args.run or args.provider, args.provider, args.split, args.replay)
        elif args.command == "eval-open":
            paths = cmd_eval_open(cfg, args.run or args.provider, args.provider, args.split, args.replay)
        elif args.command == "judge":
            paths = cmd_judge(cfg, args.evaluatee, args.baseline, args.provider, args.replay)
        elif args.command == "compare":
            paths = cmd_compare(cfg, args.base, args.treat)
        else:
            paths = cmd_report(cfg)
    except (ValuescapeError, OSError) as exc:
        print(f"valuescape {args.command}: {exc}", file=sys.stderr)
        return 2
    for name, path in paths.items():
        print(f"{name}\t{path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
