import argparse

from on_rails import Result, def_result

TABLE_FORMATS = ('csv', 'json')


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"'{text}' must be a positive integer")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"'{text}' must be an unsigned 64-bit integer")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"'{text}' must be a non-negative integer")
    return value


@def_result()
def create_cli_parser() -> Result[argparse.ArgumentParser]:
    """
    Creates the command-line parser: global flags and one sub-parser per command.

    :return: Returning a `Result` object that contains an `argparse.ArgumentParser` object.
    """

    # Define the main parser
    parser = argparse.ArgumentParser(prog='gbd-design',
                                     description='GBD-optimal multistratum experimental designs')
    parser.add_argument('--version', action='store_true', help='show program version')
    parser.add_argument('--debug', action='store_true', help='show logs at debug level')
    parser.add_argument('--quiet', action='store_true', help='show warnings and errors only')

    # Options shared by every command
    spec_parser = argparse.ArgumentParser(add_help=False)
    spec_parser.add_argument('--spec', type=str, required=True, help='The JSON problem spec')
    spec_parser.add_argument('--out', type=str, help='Output directory (overrides the spec)')

    designs_parser = argparse.ArgumentParser(add_help=False)
    designs_parser.add_argument('--design', type=str, action='append', required=True,
                                help='A design CSV (repeatable)')

    format_parser = argparse.ArgumentParser(add_help=False)
    format_parser.add_argument('--format', type=str.lower, choices=TABLE_FORMATS, default='csv',
                               help='Table output format')

    # Create a sub-parser for the 'optimize' command
    optimize_parser = argparse.ArgumentParser(add_help=False)
    optimize_parser.add_argument('--seed', type=_seed, help='Search seed (overrides the spec)')
    optimize_parser.add_argument('--workers', type=_positive_int, help='Worker processes (overrides the spec)')
    optimize_parser.add_argument('--t-total', dest='t_total', type=_positive_int,
                                 help='Number of random restarts (overrides the spec)')

    # Create a sub-parser for the 'curve' command
    curve_parser = argparse.ArgumentParser(add_help=False)
    curve_parser.add_argument('--k-max', dest='k_max', type=_non_negative_int,
                              help='Largest number of pool terms (overrides the spec)')
    curve_parser.add_argument('--seed', type=_non_negative_int, help='Sampling seed (overrides the spec)')

    # Add sub-parsers for the commands
    subparsers = parser.add_subparsers(dest='command')

    subparsers.add_parser('optimize', parents=[spec_parser, optimize_parser],
                          help='Search for the GBD-optimal (or D-optimal) design')
    subparsers.add_parser('evaluate', parents=[spec_parser, designs_parser],
                          help='Criterion value and validity of design(s)')
    subparsers.add_parser('compare', parents=[spec_parser, designs_parser, format_parser],
                          help='Efficiency table of designs over the scenarios')
    subparsers.add_parser('variances', parents=[spec_parser, designs_parser, format_parser],
                          help='Coefficient variances of projective submodels')
    subparsers.add_parser('curve', parents=[spec_parser, designs_parser, curve_parser],
                          help='Overall-variance curves over submodels')
    subparsers.add_parser('sensitivity', parents=[spec_parser, designs_parser, format_parser],
                          help='Best design over a grid of variance ratios')

    return Result.ok(parser)
