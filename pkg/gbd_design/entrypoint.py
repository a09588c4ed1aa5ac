import argparse
import logging
from typing import List, Optional

from on_rails import Result, ValidationError, def_result
from pylity.decorators.validate_func_params import validate_func_params
from schema import And, Or, Schema

from gbd_design._libs.cli_parser import create_cli_parser
from gbd_design._libs.commands import (command_compare, command_curve,
                                       command_evaluate, command_optimize,
                                       command_sensitivity, command_variances)
from gbd_design._libs.ExitCodes import ExitCode
from gbd_design._libs.Logger import Logger
from gbd_design._libs.ProgramEnvironments import ProgramEnvironments
from gbd_design._libs.ResultDetails.FailResult import FailResult
from gbd_design._libs.utility import class_properties_to_str, log_result


def main(args: Optional[List[str]] = None, logger: Optional[logging.Logger] = None) -> int:
    """
    Creates the command-line parser, parses the arguments, runs the command and logs the result.

    :return: the process exit code (see `ExitCode`).
    """

    result = _inner_main(args, logger)

    if not result.success and result.detail and not result.detail.is_instance_of(FailResult):
        print(repr(result))  # Print unexpected error

    if result.success:
        return ExitCode.SUCCESS
    return exit_code_of(result)


def exit_code_of(result: Result) -> int:
    """Handled failures keep their code; invalid arguments are input errors; anything else is a general error."""

    if result.detail is not None and result.detail.is_instance_of(FailResult):
        return result.detail.code
    if result.detail is not None and result.detail.is_instance_of(ValidationError):
        return ExitCode.INPUT_ERROR
    return ExitCode.GENERAL_ERROR


@def_result()
def _parse_arguments(parser: argparse.ArgumentParser, args: Optional[List[str]]) -> Result:
    """argparse exits on bad arguments and on --help; both become Results here."""

    try:
        return Result.ok(parser.parse_known_args(args))
    except SystemExit as error:
        if error.code in (0, None):
            return Result.ok(None)
        return Result.fail(FailResult(code=ExitCode.INPUT_ERROR, message="Invalid command-line arguments."))


@def_result()
@validate_func_params(schema=Schema({
    'logger': Or(None, logging.Logger, error='The logger must be None or type of logging.Logger'),
    'args': Or(None, [str], error='The args must be None or be a list of strings'),
}))
def _inner_main(args: Optional[List[str]] = None, logger: Optional[logging.Logger] = None) -> Result:
    if not logger:
        logger = Logger.get(__name__) \
            .on_fail_break_function() \
            .value

    return create_cli_parser() \
        .on_success(lambda parser: _parse_arguments(parser, args)
                    .on_success(lambda parsed: run(parsed, parser, logger) if parsed else Result.ok())) \
        .finally_tee(lambda prev_result: log_result(logger, prev_result)
                     .on_fail(lambda res: logger.error("An error occurred while logging Result.\n"
                                                       f"Current Error: {res}\n"
                                                       f"Previous Result: {prev_result}"))
                     ) \
        .on_fail_new_detail(lambda prev_result: FailResult(code=exit_code_of(prev_result))) \
        .on_success_new_detail(None)


@def_result()
@validate_func_params(schema=Schema({
    'arguments': And(lambda param: param is not None, error='The arguments is required'),
    'parser': And(lambda param: param is not None, error='The parser is required'),
    'logger': And(logging.Logger, error='The logger is required and must be type of logging.Logger'),
}))
def run(arguments, parser, logger: logging.Logger) -> Result:
    """
    Sets the log level, reads the program environments and runs the requested command.

    :param arguments: the `(known_params, args)` pair returned by `parse_known_args`.

    :param parser: the parser, used to print the help when no command is given.

    :param logger: The program logger.
    :type logger: logging.Logger
    """

    known_params, args = arguments

    return Logger.set_level(debug=known_params.debug, quiet=known_params.quiet) \
        .on_success(lambda: _apply_level(logger, known_params)) \
        .on_success(lambda: ProgramEnvironments.get_environments()) \
        .on_success_tee(lambda environments:
                        (logger.debug(class_properties_to_str(environments, "Environments")),
                         logger.debug(f"known params: {known_params}\nArgs: {args}"))
                        ) \
        .on_success(lambda environments: _run(known_params, args, parser, environments, logger))


def _apply_level(logger: logging.Logger, known_params) -> None:
    if known_params.debug:
        logger.setLevel(logging.DEBUG)
    elif known_params.quiet:
        logger.setLevel(logging.WARNING)


@def_result()
def _run(known_params, args, parser, environments: ProgramEnvironments, logger: logging.Logger) -> Result:
    """
    Executes the command function selected by `known_params.command`. Unknown extra arguments are rejected.
    """

    if args:
        return Result.fail(detail=FailResult(code=ExitCode.INPUT_ERROR,
                                             message=f"Unrecognized arguments: {' '.join(args)}"))
    if not known_params.command:
        if known_params.version:
            logger.info(f"Program Version: {environments.version}")
            return Result.ok()

        # Print the list of available commands
        parser.print_help()
        return Result.fail(detail=FailResult(code=ExitCode.INPUT_ERROR, message="No command specified."))

    command = known_params.command
    if command == 'optimize':
        return command_optimize(logger, known_params.spec, environments, out=known_params.out,
                                seed=known_params.seed, workers=known_params.workers, t_total=known_params.t_total)
    if command == 'evaluate':
        return command_evaluate(logger, known_params.spec, known_params.design, out=known_params.out)
    if command == 'compare':
        return command_compare(logger, known_params.spec, known_params.design, out=known_params.out,
                               table_format=known_params.format)
    if command == 'variances':
        return command_variances(logger, known_params.spec, known_params.design, out=known_params.out,
                                 table_format=known_params.format)
    if command == 'curve':
        return command_curve(logger, known_params.spec, known_params.design, out=known_params.out,
                             k_max=known_params.k_max, seed=known_params.seed)
    if command == 'sensitivity':
        return command_sensitivity(logger, known_params.spec, known_params.design, out=known_params.out,
                                   table_format=known_params.format)

    return Result.ok()  # pragma: no cover


if __name__ == '__main__':  # pragma: no cover
    code = main()
    raise SystemExit(code)
