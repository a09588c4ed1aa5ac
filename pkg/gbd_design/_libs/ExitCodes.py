class ExitCode:
    """
    Defines the process exit codes returned by the gbd-design commands.
    """

    # The command completed and every requested output was written.
    SUCCESS = 0

    # An unexpected error occurred that is not covered by any other exit code.
    GENERAL_ERROR = 1

    # The problem spec, a design file or a command-line argument is invalid or unreadable.
    # Nothing is written to the output directory in this case.
    INPUT_ERROR = 2

    # The computation could not produce a usable answer, e.g. every design found by the search
    # has a singular information matrix.
    COMPUTATION_FAILURE = 3
