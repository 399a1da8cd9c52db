import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed

import numpy as np
import polars as pl
import statsmodels.api as sm
from tqdm import tqdm

from ..dao.experiment_config import ExperimentConfig
from ..dao.result_table import AnswerRow, ResultRecord
from ..models import get_conn, init_results_table, init_transcript_table
from .core import DataHistogram, LinearQuery, pairs_to_matrix, read_graph
from .errors import BudgetExhaustedError
from .generators import gen_cut_stream, gen_graph, gen_graph_edges
from .idc import IterativeDatabaseConstruction, make_idc
from .noise import NoiseSource, PrivacyParams, PrivacyReport, rr_error_bound
from .offline import ExpMechDistinguisher, IcConfig, SvdRank1Distinguisher, ic_release, max_class_error
from .online import AnswerKind, OnlineConfig, OnlineMechanism, errors_on, practical_constant, run_adversary, solve_alpha
from .synth import (
    bruteforce_separation,
    cut_norm_bruteforce,
    project_to_synthetic,
    randomized_response,
    residual_cut_norm,
    round_to_unweighted,
)

BRUTE_FORCE_MAX_VERTICES = 14


def table_bounds(db: DataHistogram, k: int, privacy: PrivacyParams, beta: float) -> dict:
    """Asymptotic error shapes for MW, FK, MM and randomized response, without hidden constants."""
    size = db.universe.size
    log_k = math.log(max(k, 2))
    log_x = math.log(max(size, 2))
    eps = privacy.epsilon
    log_delta = math.log(4 / privacy.delta) if privacy.delta > 0 else math.nan
    return {
        "bound_mw": math.sqrt(db.n) * math.sqrt(log_k) * log_x**0.25 / math.sqrt(eps),
        "bound_fk": db.n2**0.25 * math.sqrt(log_k) * size**0.25 / math.sqrt(eps),
        "bound_mm": math.sqrt(db.n)
        * (log_x * log_k) ** 0.25
        * math.sqrt(log_delta * math.log(max(k, 2) / beta))
        / math.sqrt(eps),
        "bound_rr": rr_error_bound(size, max(k, 2), beta, eps),
    }


def log_log_slope(x, y) -> float:
    """OLS slope of log(y) on log(x)."""
    design = sm.add_constant(np.log(np.asarray(x, dtype=float)))
    fit = sm.OLS(np.log(np.asarray(y, dtype=float)), design).fit()
    return float(fit.params[1])


def hypothesis_cut_error(db: DataHistogram, vector: np.ndarray) -> float | None:
    """Exact max over all cuts of |Q(D) - Q(h)| on the canonical scale, or None on large graphs."""
    vertex_count = db.universe.vertex_count
    if vertex_count is None or vertex_count > BRUTE_FORCE_MAX_VERTICES:
        return None
    return cut_norm_bruteforce(pairs_to_matrix(db.weights - vector, vertex_count))[0] / 2


class ExperimentRunner:
    """
    Runs the release experiments and stores their results.

    Parameters
    ----------
    saving_dir: str, optional, default="data/"
        Directory for generated graphs, query streams and exported results.
        It creates subdirectories for raw, processed, and external data.
    database_file: str, optional, default="data.ddb"
        The file path for the DuckDB database instance.
    log_file: str, optional, default="idc_release.log"
        The file path where log messages will be saved.
    """

    def __init__(
        self,
        saving_dir: str = "data/",
        database_file: str = "data.ddb",
        log_file: str = "idc_release.log",
    ):
        self.saving_dir = saving_dir
        self.data_file = database_file
        self.conn = get_conn(self.data_file)
        self.last_slopes: pl.DataFrame | None = None

        logging.basicConfig(
            level=logging.INFO,
            format="%(asctime)s - %(levelname)s - %(message)s",
            datefmt="%d-%b-%y %H:%M:%S",
            filename=log_file,
        )
        for sub in ("raw", "processed", "external"):
            if not os.path.exists(self.saving_dir + sub):
                os.makedirs(self.saving_dir + sub)

    @staticmethod
    def threads() -> int:
        return max(1, int(os.environ.get("IDC_RELEASE_THREADS", os.cpu_count() or 1)))

    @staticmethod
    def run_id(config: ExperimentConfig) -> str:
        return hashlib.sha1(config.to_json().encode()).hexdigest()[:12]

    def load_graph(self, config: ExperimentConfig, vertex_count=None, p=None) -> DataHistogram:
        if config.graph is not None and vertex_count is None:
            return read_graph(config.graph)
        vertex_count = vertex_count or config.gen_v
        if config.gen_m is not None:
            file_path = self.saving_dir + f"raw/gnm_{vertex_count}_{config.gen_m}_{config.seed}.txt"
            return gen_graph_edges(vertex_count, config.gen_m, seed=config.seed, file_path=file_path)
        p = config.gen_p if p is None else p
        file_path = self.saving_dir + f"raw/gnp_{vertex_count}_{p}_{config.seed}.txt"
        return gen_graph(vertex_count, p, seed=config.seed, file_path=file_path)

    def resolve_alpha(self, config: ExperimentConfig, db: DataHistogram, privacy: PrivacyParams) -> float:
        if config.alpha is not None and not config.alpha_auto:
            return config.alpha
        sizing = make_idc(config.idc, db, 1.0, k=config.k)
        constant = practical_constant(config.sigma_constant, config.T_constant)
        return solve_alpha(sizing, privacy, config.k, config.beta, constant=constant)

    def _map_trials(self, work, sources: list[NoiseSource], label: str) -> list:
        results = [None] * len(sources)
        with ThreadPoolExecutor(max_workers=self.threads()) as pool:
            futures = {pool.submit(work, trial, src): trial for trial, src in enumerate(sources)}
            for future in tqdm(as_completed(futures), total=len(futures), desc=label):
                results[futures[future]] = future.result()
        return results

    def _base_record(self, config, db, trial, src, privacy: PrivacyReport, **fields) -> ResultRecord:
        return ResultRecord(
            run_id=self.run_id(config),
            subcommand=config.subcommand,
            mechanism=config.mechanism,
            idc=config.idc if config.mechanism != "rr" else None,
            trial=trial,
            seed=src.seed,
            vertex_count=db.universe.vertex_count,
            universe_size=db.universe.size,
            edge_probability=None if config.graph or config.gen_m is not None else config.gen_p,
            n=db.n,
            n2=db.n2,
            epsilon=config.eps,
            delta=config.delta,
            beta=config.beta,
            k=config.k,
            privacy_epsilon=privacy.as_dict()["epsilon"],
            privacy_delta=privacy.as_dict()["delta"],
            private=privacy.private,
            config_json=config.to_json(),
            **{**table_bounds(db, config.k, PrivacyParams(config.eps, config.delta), config.beta), **fields},
        )

    def online_trial(self, config: ExperimentConfig, db: DataHistogram, trial: int, src: NoiseSource):
        start = time.perf_counter()
        privacy = PrivacyParams(config.eps, config.delta)
        alpha = self.resolve_alpha(config, db, privacy)
        idc = make_idc(config.idc, db, alpha, k=config.k)
        online = OnlineConfig(
            privacy,
            alpha,
            config.beta,
            config.k,
            sigma_constant=config.sigma_constant,
            T_constant=config.T_constant,
        )
        queries = gen_cut_stream(db.universe.require_graph(), config.k, seed=src.seed)
        mechanism = OnlineMechanism(db, idc, online, src)
        run_adversary(mechanism, queries)
        errors = errors_on(mechanism)
        record = self._base_record(
            config,
            db,
            trial,
            src,
            mechanism.privacy_report(),
            alpha=alpha,
            queries_answered=len(errors),
            max_error=float(errors.max(initial=0.0)),
            mean_error=float(errors.mean()) if len(errors) else 0.0,
            max_error_bruteforce=hypothesis_cut_error(db, mechanism.hypothesis.as_vector()),
            update_count=mechanism.update_count,
            update_bound=mechanism.B,
            exhausted=any(r.kind == AnswerKind.EXHAUSTED for r in mechanism.transcript),
            threshold=mechanism.T,
            sigma=mechanism.sigma,
            runtime_seconds=time.perf_counter() - start,
        )
        answers = [
            AnswerRow(
                run_id=record.run_id,
                trial=trial,
                position=i,
                kind=r.kind.value,
                answer=None if math.isnan(r.answer) else r.answer,
                query_json=json.dumps(r.query.to_dict()),
            )
            for i, r in enumerate(mechanism.transcript)
        ]
        return record, answers

    def offline_trial(self, config: ExperimentConfig, db: DataHistogram, trial: int, src: NoiseSource):
        start = time.perf_counter()
        privacy = PrivacyParams(config.eps, config.delta)
        alpha = self.resolve_alpha(config, db, privacy)
        idc: IterativeDatabaseConstruction = make_idc(config.idc, db, alpha, k=config.k)
        query_class = gen_cut_stream(db.universe.require_graph(), config.sampled_cuts, seed=src.seed)
        if config.distinguisher == "svd":
            dist = SvdRank1Distinguisher(seed=src.seed % 2**32)
        else:
            dist = ExpMechDistinguisher(query_class, src)
        result = ic_release(db, idc, dist, IcConfig(privacy, alpha, config.beta), src)
        errors = np.array([abs(q.canonical(db.weights) - result.hypothesis.evaluate(q)) for q in query_class])
        return self._base_record(
            config,
            db,
            trial,
            src,
            result.privacy,
            alpha=alpha,
            queries_answered=result.rounds,
            max_error=max_class_error(db, result.hypothesis, query_class),
            mean_error=float(errors.mean()),
            max_error_bruteforce=hypothesis_cut_error(db, result.hypothesis.as_vector()),
            update_count=len(result.updates),
            update_bound=result.B,
            exit_reason=result.exit_reason,
            runtime_seconds=time.perf_counter() - start,
        ), []

    def rr_trial(self, config: ExperimentConfig, db: DataHistogram, trial: int, src: NoiseSource):
        start = time.perf_counter()
        vertex_count = db.universe.require_graph()
        noisy = randomized_response(db, config.eps, src)
        cuts: list[LinearQuery] = gen_cut_stream(vertex_count, config.sampled_cuts, seed=src.seed)
        errors = np.array([abs(q.canonical(noisy.z) - q.canonical(db.weights)) for q in cuts])
        spread = np.array(
            [math.sqrt(vertex_count * max(len(q.S), 1) * max(len(q.T), 1)) for q in cuts]
        )

        small = vertex_count <= BRUTE_FORCE_MAX_VERTICES
        oracle = bruteforce_separation if small else None
        projection = project_to_synthetic(noisy, oracle=oracle, budget=config.budget)
        projection.graph.write(self.saving_dir + f"processed/synthetic_{self.run_id(config)}_{trial}.txt")
        residuals = {}
        if small:
            clipped = np.clip(noisy.z, 0, 1)
            rounded = round_to_unweighted(projection.graph, src)
            residuals = {
                "residual_clip": cut_norm_bruteforce(pairs_to_matrix(clipped - noisy.z, vertex_count))[0],
                "residual_projected": cut_norm_bruteforce(
                    pairs_to_matrix(projection.graph.x - noisy.z, vertex_count)
                )[0],
                "residual_true_clip": residual_cut_norm(db, clipped),
                "residual_true_projected": residual_cut_norm(db, projection.graph),
                "residual_true_rounded": residual_cut_norm(db, rounded.weights),
            }

        return self._base_record(
            config,
            db,
            trial,
            src,
            noisy.privacy,
            queries_answered=len(cuts),
            max_error=float(errors.max()),
            mean_error=float(errors.mean()),
            max_error_bruteforce=hypothesis_cut_error(db, noisy.z),
            bound_rr=rr_error_bound(db.universe.size, len(cuts), config.beta, config.eps),
            per_cut_error=float((errors * config.eps / spread).max()),
            **residuals,
            runtime_seconds=time.perf_counter() - start,
        ), []

    def _trial_fn(self, config: ExperimentConfig):
        match config.mechanism:
            case "online":
                return self.online_trial
            case "ic":
                return self.offline_trial
            case "rr":
                return self.rr_trial
            case other:
                raise ValueError(f"Unknown mechanism {other!r}.")

    def _run_trials(self, config: ExperimentConfig, db: DataHistogram, label: str, src: NoiseSource):
        sources = src.spawn(config.trials)
        fn = self._trial_fn(config)
        outcomes = self._map_trials(lambda trial, s: fn(config, db, trial, s), sources, label)
        records = [record for record, _ in outcomes]
        answers = [row for _, rows in outcomes for row in rows]
        return records, answers

    def run(self, config: ExperimentConfig) -> pl.DataFrame:
        """
        Execute one subcommand and persist its results.

        Raises
        ------
        BudgetExhaustedError
            After persisting, when an online trial refused a query.
        """
        logging.info(f"Running {config.subcommand} with {config.to_json()}")
        root = NoiseSource(config.seed, zero_noise=config.zero_noise)
        match config.subcommand:
            case "release-online":
                config = config.model_copy(update={"mechanism": "online"})
            case "release-offline":
                config = config.model_copy(update={"mechanism": "ic"})
            case "rr-synth":
                config = config.model_copy(update={"mechanism": "rr"})
            case "bench":
                return self.bench(config, root)

        db = self.load_graph(config)
        records, answers = self._run_trials(config, db, config.subcommand, root)
        df = self.persist(config, records, answers)
        if any(r.exhausted for r in records):
            exhausted = sum(r.exhausted for r in records)
            logging.warning(f"{exhausted} of {len(records)} trials exhausted the update budget.")
            raise BudgetExhaustedError(f"{exhausted} of {len(records)} trials exhausted the update budget.")
        return df

    def bench(self, config: ExperimentConfig, root: NoiseSource) -> pl.DataFrame:
        """
        Sweep (|V|, p, eps) and report empirical error next to the asymptotic bound shapes.

        With ``gen_m`` set the edge count stays fixed across |V| (so n and n2
        are constant) and ``sweep_p`` is ignored.
        """
        records = []
        densities = [None] if config.gen_m is not None else config.sweep_p
        cells = [(v, p, e) for v in config.sweep_v for p in densities for e in config.sweep_eps]
        for (v, p, e), src in zip(cells, root.spawn(len(cells))):
            update = {"gen_v": v, "eps": e, "graph": None}
            if p is not None:
                update["gen_p"] = p
            cell = config.model_copy(update=update)
            db = self.load_graph(cell, vertex_count=v, p=p)
            label = f"m={config.gen_m}" if p is None else f"p={p}"
            cell_records, _ = self._run_trials(cell, db, f"bench |V|={v} {label} eps={e}", src)
            records.extend(cell_records)
        df = self.persist(config, records, [])
        self.last_slopes = self.bench_slopes(df)
        if config.out is not None:
            self.last_slopes.write_csv(os.path.splitext(config.out)[0] + "_slopes.csv")
        return df

    @staticmethod
    def bench_slopes(df: pl.DataFrame) -> pl.DataFrame:
        """
        Log-log slopes against universe size, per (p, eps).

        ``error_slope`` uses the sizes with a positive mean error. ``alpha_slope``
        and ``bound_fk_slope`` use every size; at a fixed edge count the FK
        values of both grow like |X|^(1/4).
        """
        rows = []
        for (p, eps), group in df.group_by(["edge_probability", "epsilon"], maintain_order=True):
            summary = (
                group.group_by("universe_size")
                .agg(pl.col("max_error").mean(), pl.col("alpha").mean(), pl.col("bound_fk").mean())
                .sort("universe_size")
            )
            if summary.height < 2:
                continue
            positive = summary.filter(pl.col("max_error") > 0)
            row = {"edge_probability": p, "epsilon": eps, "error_slope": None, "alpha_slope": None}
            if positive.height >= 2:
                row["error_slope"] = log_log_slope(positive["universe_size"], positive["max_error"])
            if summary["alpha"].null_count() == 0:
                row["alpha_slope"] = log_log_slope(summary["universe_size"], summary["alpha"])
            row["bound_fk_slope"] = log_log_slope(summary["universe_size"], summary["bound_fk"])
            rows.append(row)
        return pl.DataFrame(
            rows,
            schema={
                "edge_probability": pl.Float64,
                "epsilon": pl.Float64,
                "error_slope": pl.Float64,
                "alpha_slope": pl.Float64,
                "bound_fk_slope": pl.Float64,
            },
        )

    def persist(self, config: ExperimentConfig, records: list[ResultRecord], answers: list[AnswerRow]) -> pl.DataFrame:
        df = pl.DataFrame([r.model_dump() for r in records], schema=self.result_schema())
        init_results_table(self.data_file)
        init_transcript_table(self.data_file)
        try:
            self.conn.sql("INSERT INTO 'resulttable' BY NAME SELECT * FROM df;")
            logging.info(f"Inserted {df.height} rows into resulttable")
            if answers:
                transcript = pl.DataFrame([a.model_dump() for a in answers])
                self.conn.sql("INSERT INTO 'transcripttable' BY NAME SELECT * FROM transcript;")
                logging.info(f"Inserted {transcript.height} rows into transcripttable")
        except Exception as e:
            logging.error(f"Error inserting results: {e}")
            raise

        if config.out is not None:
            match config.format:
                case "csv":
                    df.write_csv(config.out)
                case "json":
                    df.write_json(config.out)
            logging.info(f"Wrote {df.height} result rows to {config.out}")
        return df

    @staticmethod
    def result_schema() -> dict:
        types = {int: pl.Int64, float: pl.Float64, str: pl.String, bool: pl.Boolean}
        schema = {}
        for name, info in ResultRecord.model_fields.items():
            annotation = info.annotation
            base = next((t for t in types if annotation is t or t in getattr(annotation, "__args__", ())), str)
            schema[name] = types[base]
        return schema
