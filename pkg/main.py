import argparse
import logging
import sys

from src.dao.experiment_config import ExperimentConfig
from src.data.errors import BudgetExhaustedError, ConfigError, ToyScaleError
from src.data.experiments import ExperimentRunner
from src.data.generators import gen_cut_stream, gen_graph

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_TOY_SCALE = 4

MECHANISM_FOR = {"release-online": "online", "release-offline": "ic", "rr-synth": "rr"}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idc-release", description="Private query release experiments.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mechanism", choices=["online", "ic", "rr"])
    common.add_argument("--idc", choices=["fk", "mw", "mm"], default="mw")
    common.add_argument("--distinguisher", choices=["expmech", "svd"], default="expmech")
    common.add_argument("--eps", type=float, default=1.0)
    common.add_argument("--delta", type=float, default=1e-6)
    alpha = common.add_mutually_exclusive_group()
    alpha.add_argument("--alpha", type=float)
    alpha.add_argument("--alpha-auto", action="store_true")
    common.add_argument("--beta", type=float, default=0.05)
    common.add_argument("--k", type=int, default=100)
    common.add_argument("--graph", help="edge-list file; overrides --gen-v/--gen-p")
    common.add_argument("--gen-v", type=int, default=10)
    common.add_argument("--gen-p", type=float, default=0.5)
    common.add_argument("--gen-m", type=int, help="fixed edge count G(n, m); overrides --gen-p")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=1)
    common.add_argument("--zero-noise", action="store_true", help="testing only: all Laplace draws are 0")
    common.add_argument("--sigma-constant", type=float, default=1000.0)
    common.add_argument("--T-constant", dest="T_constant", type=float, default=4.0)
    common.add_argument("--budget", type=int, default=50, help="projection oracle calls (rr-synth)")
    common.add_argument("--sampled-cuts", type=int, default=1000)
    common.add_argument("--out")
    common.add_argument("--format", choices=["csv", "json"], default="csv")
    common.add_argument("--saving-dir", default="data/")
    common.add_argument("--database-file", default="data.ddb")

    for name in MECHANISM_FOR:
        sub.add_parser(name, parents=[common])
    bench = sub.add_parser("bench", parents=[common])
    bench.add_argument("--sweep-v", type=_ints, default=[6, 8, 10, 12])
    bench.add_argument("--sweep-p", type=_floats, default=[0.3, 0.5])
    bench.add_argument("--sweep-eps", type=_floats, default=[1.0])

    graph = sub.add_parser("gen-graph")
    graph.add_argument("--gen-v", type=int, required=True)
    graph.add_argument("--gen-p", type=float, required=True)
    graph.add_argument("--seed", type=int, default=0)
    graph.add_argument("--out", required=True)

    cuts = sub.add_parser("gen-cuts")
    cuts.add_argument("--gen-v", type=int, required=True)
    cuts.add_argument("--k", type=int, required=True)
    cuts.add_argument("--seed", type=int, default=0)
    cuts.add_argument("--out", required=True)
    return parser


def to_config(args: argparse.Namespace) -> ExperimentConfig:
    fields = {
        key: value
        for key, value in vars(args).items()
        if key not in ("saving_dir", "database_file") and value is not None
    }
    fields.setdefault("mechanism", MECHANISM_FOR.get(args.subcommand, "online"))
    return ExperimentConfig(**fields)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        match args.subcommand:
            case "gen-graph":
                gen_graph(args.gen_v, args.gen_p, seed=args.seed, file_path=args.out)
            case "gen-cuts":
                gen_cut_stream(args.gen_v, args.k, seed=args.seed, file_path=args.out)
            case _:
                config = to_config(args)
                runner = ExperimentRunner(saving_dir=args.saving_dir, database_file=args.database_file)
                df = runner.run(config)
                print(df)
    except BudgetExhaustedError as e:
        print(f"budget exhausted: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except ToyScaleError as e:
        print(f"toy-scale cap exceeded: {e}", file=sys.stderr)
        return EXIT_TOY_SCALE
    except (ConfigError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        logging.error(f"Run failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
