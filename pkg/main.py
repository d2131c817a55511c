"Command-line interface for the graph generation pipeline."

import logging
from pathlib import Path

import click
import yaml

import canonical
import config
import constants
import dataset
import graphs
import metrics
import model
import utils
from utils import Error

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Any '--key value' not declared by a command is a config setting.
SETTINGS = dict(ignore_unknown_options=True, allow_extra_args=True)


class Commands(click.Group):
    "Command group reporting errors as one line and an exit status by kind."

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except Error as error:
            click.echo(error.oneline(), err=True)
            ctx.exit(error.exit_code)
        except OSError as error:
            error = Error(str(error), constants.IO_ERROR)
            click.echo(error.oneline(), err=True)
            ctx.exit(error.exit_code)


def print_version(ctx, param, value):
    if not value or ctx.resilient_parsing:
        return
    click.echo(f"{constants.SOFTWARE} {constants.__version__}")
    for name, version in constants.FORMAT_VERSIONS.items():
        click.echo(f"{name} format {version}")
    ctx.exit()


def overrides(args):
    "Return the settings given as '--key value' or '--key=value' arguments."
    result = {}
    args = list(args)
    while args:
        flag = args.pop(0)
        if not flag.startswith("--"):
            raise Error(f"expected '--key value', got '{flag}'", constants.CONFIG_ERROR)
        if "=" in flag:
            key, value = flag[2:].split("=", 1)
        elif args:
            key, value = flag[2:], args.pop(0)
        else:
            raise Error(f"no value for '{flag}'", constants.CONFIG_ERROR)
        result[key] = value
    return result


def resolve(ctx):
    "Return the run configuration for the command, and log it."
    result = config.RunConfig.load(ctx.obj["config"], overrides(ctx.args))
    logger.info("%s %s: %s", constants.SOFTWARE, ctx.info_name, constants.__version__)
    result.log()
    return result


def required(settings, key):
    value = getattr(settings, key)
    if value is None:
        raise Error(f"missing setting '{key}'", constants.CONFIG_ERROR)
    return value


def read_graphs(path):
    try:
        return graphs.parse_graph_file(path)
    except OSError as error:
        raise Error(f"cannot read {path}: {error}", constants.IO_ERROR)


@click.group(cls=Commands)
@click.option(
    "--version",
    is_flag=True,
    expose_value=False,
    is_eager=True,
    callback=print_version,
    help="Show the software and file format versions.",
)
@click.option("--config", "config_path", type=click.Path(), help="Config file of key=value lines.")
@click.option("--verbose", is_flag=True, help="Log debug messages.")
@click.option("--quiet", is_flag=True, help="Log only warnings and errors.")
@click.pass_context
def cli(ctx, config_path, verbose, quiet):
    "Canonical-code graph generation: preprocess, train, generate, evaluate."
    if verbose:
        level = logging.DEBUG
    elif quiet:
        level = logging.WARNING
    else:
        level = logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
    ctx.obj = dict(config=config_path)


@cli.command(context_settings=SETTINGS)
@click.option("--augment-degree", is_flag=True, help="Suffix each node label by its degree.")
@click.pass_context
def preprocess(ctx, augment_degree):
    "Canonicalize the graphs; write reduced codes and the token vocabulary."
    settings = resolve(ctx)
    corpus = read_graphs(required(settings, "graphs"))
    codes_path = required(settings, "codes")
    vocab_path = required(settings, "vocab")
    if augment_degree:
        corpus = [dataset.augment_with_degree(g) for g in corpus]
    timer = utils.Timer()
    codes = canonical.min_dfs_codes(corpus, workers=settings.workers)
    entries = []
    kept = []
    for position, (g, code) in enumerate(zip(corpus, codes)):
        if code is None:
            continue
        entries.append((dataset.graph_id(g, position), canonical.reduce(code)))
        kept.append(g)
    if len(kept) < len(corpus):
        logger.warning("skipped %s edgeless or disconnected graphs", len(corpus) - len(kept))
    logger.info("canonicalized %s graphs in %.1f s CPU", len(kept), timer.elapsed)
    if not entries:
        logger.warning("no graphs to write; empty outputs")
        for path in (codes_path, vocab_path):
            Path(path).write_text("", encoding=constants.ENCODING)
        return
    vocabulary = dataset.build_vocabulary(
        [code for gid, code in entries],
        dataset.corpus_max_nodes(kept),
        workers=settings.workers,
    )
    dataset.write_codes(entries, vocabulary, codes_path)
    vocabulary.write(vocab_path)


@cli.command(context_settings=SETTINGS)
@click.pass_context
def split(ctx):
    "Assign the graphs to train, validation and test partitions."
    settings = resolve(ctx)
    corpus = read_graphs(required(settings, "graphs"))
    spec = dataset.SplitSpec(settings.seed, settings.test_fraction, settings.val_fraction)
    dataset.split(corpus, spec)
    dataset.write_splits(spec.membership, required(settings, "splits"))


def read_vocabulary(settings):
    try:
        return dataset.TokenVocabulary.read(required(settings, "vocab"))
    except OSError as error:
        raise Error(f"cannot read vocabulary: {error}", constants.IO_ERROR)


@cli.command(context_settings=SETTINGS)
@click.pass_context
def train(ctx):
    "Train the model on the reduced codes; write the checkpoint and the training log."
    settings = resolve(ctx)
    vocabulary = read_vocabulary(settings)
    entries = dataset.read_codes(required(settings, "codes"), vocabulary)
    if settings.splits:
        membership = dataset.read_splits(settings.splits)
    else:
        membership = {}
    corpus = []
    validation = []
    for gid, code in entries:
        partition = membership.get(gid, constants.TRAIN)
        if partition == constants.TRAIN:
            corpus.append(model.encode_sequence(code, vocabulary))
        elif partition == constants.VAL:
            validation.append(model.encode_sequence(code, vocabulary))
    params = model.ModelParams.initialize(
        vocabulary,
        seed=settings.seed,
        embed=settings.embed,
        hidden=settings.hidden,
        layers=settings.layers,
        head_hidden=settings.head_hidden,
        dropout=settings.dropout,
    )
    result = model.train(
        params, corpus, settings, validation=validation, log_path=settings.training_log
    )
    click.echo(f"parameters {utils.thousands(result.parameter_count)}")
    click.echo(f"cpu_time {result.cpu_time:.1f}")
    model.save_checkpoint(result.params, required(settings, "checkpoint"))


@cli.command(context_settings=SETTINGS)
@click.option("--count", type=int, help="Number of graphs; default 'sample_count'.")
@click.option("--out", type=click.Path(), required=True, help="Output graph file.")
@click.option("--generation-report", type=click.Path(), help="YAML report per sample.")
@click.option("--greedy", is_flag=True, help="Take the most probable value at each step.")
@click.pass_context
def generate(ctx, count, out, generation_report, greedy):
    "Sample reduced codes from the model and write the reconstructed graphs."
    settings = resolve(ctx)
    vocabulary = read_vocabulary(settings)
    params = model.load_checkpoint(required(settings, "checkpoint"), vocabulary)
    if count is None:
        count = settings.sample_count
    samples = model.sample_many(
        params,
        vocabulary,
        count,
        seed=settings.seed,
        max_steps=settings.max_steps,
        greedy=greedy,
        workers=settings.workers,
    )
    result = []
    records = []
    for number, (code, report) in enumerate(samples):
        g, reconstruction = canonical.graph_from_reduced(code, gid=f"gen{number}")
        result.append(g)
        record = dict(gid=g.gid, code=str(code))
        record.update(report.as_dict())
        record["reconstruction"] = reconstruction.as_dict()
        records.append(record)
        if reconstruction.discarded:
            logger.warning("%s: %s entries discarded", g.gid, len(reconstruction.discarded))
    graphs.write_graph_file(result, out)
    truncated = len([r for r in records if r["truncated"]])
    nonempty = len([g for g in result if g.edges])
    logger.info("generated %s graphs; %s nonempty, %s truncated", count, nonempty, truncated)
    if generation_report:
        with open(generation_report, "w", encoding=constants.ENCODING) as outfile:
            yaml.safe_dump(
                dict(
                    created=utils.timestr(),
                    count=count,
                    nonempty=nonempty,
                    truncated=truncated,
                    greedy=greedy,
                    samples=records,
                ),
                outfile,
                allow_unicode=True,
                sort_keys=False,
            )


@cli.command(context_settings=SETTINGS)
@click.option("--generated", type=click.Path(), required=True, help="Generated graph file.")
@click.option("--reference", type=click.Path(), required=True, help="Reference (test) graph file.")
@click.option("--training", type=click.Path(), help="Training graph file, for novelty.")
@click.option(
    "--protocol",
    type=click.Choice(sorted(constants.PROTOCOLS)),
    help="Preset batch size and rounds; overrides 'eval_batch' and 'eval_rounds'.",
)
@click.option("--validator", help="Command judging one graph on its input as valid or invalid.")
@click.pass_context
def evaluate(ctx, generated, reference, training, protocol, validator):
    "Compare generated graphs with reference graphs; write the metric report."
    settings = resolve(ctx)
    kernel = dict(
        sigma=settings.mmd_sigma,
        nspdk_r=settings.nspdk_r,
        nspdk_d=settings.nspdk_d,
        seed=settings.seed,
        workers=settings.workers,
    )
    if protocol:
        evaluation = metrics.EvalProtocol.preset(protocol, **kernel)
    else:
        evaluation = metrics.EvalProtocol(settings.eval_batch, settings.eval_rounds, **kernel)
    report = metrics.evaluate(
        read_graphs(generated),
        read_graphs(reference),
        protocol=evaluation,
        training=read_graphs(training) if training else None,
        validator=validator,
    )
    if settings.report:
        report.write(settings.report)
    click.echo(report.table())


@cli.command(context_settings=SETTINGS)
@click.option("--reduced", is_flag=True, help="Also output the reduced form.")
@click.option(
    "--check-iso",
    nargs=2,
    metavar="GID GID",
    help="Only report whether the two graphs are isomorphic.",
)
@click.pass_context
def canon(ctx, reduced, check_iso):
    "Output the minimum DFS code of each graph."
    settings = resolve(ctx)
    corpus = read_graphs(required(settings, "graphs"))
    if check_iso:
        lookup = dict([(dataset.graph_id(g, i), g) for i, g in enumerate(corpus)])
        try:
            g1, g2 = [lookup[gid] for gid in check_iso]
        except KeyError as error:
            raise Error(f"no graph {error}", constants.DATA_ERROR)
        result = canonical.is_isomorphic(g1, g2)
        click.echo("isomorphic" if result else "not isomorphic")
        return
    for position, g in enumerate(corpus):
        code = canonical.min_dfs_code(g)
        parts = [dataset.graph_id(g, position), str(code)]
        if reduced:
            parts.append(str(canonical.reduce(code)))
        click.echo("\t".join(parts))


@cli.command("sample-citation", context_settings=SETTINGS)
@click.option("--count", type=int, required=True, help="Number of subgraphs.")
@click.option("--out", type=click.Path(), required=True, help="Output graph file.")
@click.pass_context
def sample_citation(ctx, count, out):
    "Sample subgraphs of a large graph by random walks with restart."
    settings = resolve(ctx)
    corpus = read_graphs(required(settings, "graphs"))
    if len(corpus) != 1:
        raise Error(f"expected one graph, got {len(corpus)}", constants.DATA_ERROR)
    samples = dataset.sample_subgraphs(
        corpus[0],
        count,
        walks_per_sample=settings.walk_count,
        restart_p=settings.restart_p,
        seed=settings.seed,
        walk_len=settings.walk_len,
    )
    graphs.write_graph_file(samples, out)


@cli.command(context_settings=SETTINGS)
@click.pass_context
def stats(ctx):
    "Output summary statistics of the graph corpus."
    settings = resolve(ctx)
    corpus = read_graphs(required(settings, "graphs"))
    vocabulary = read_vocabulary(settings) if settings.vocab else None
    for key, value in dataset.corpus_statistics(corpus, vocabulary).items():
        if isinstance(value, float):
            value = f"{value:.2f}"
        click.echo(f"{key}={value}")


if __name__ == "__main__":
    cli()
