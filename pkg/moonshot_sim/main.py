# moonshot_sim/main.py

from .cli import main as run_cli_main


def entry_point():
    """
    The main entry point for the ``moonshot-sim`` command.

    Installed as a console script through ``[project.scripts]`` in
    ``pyproject.toml``. Argument parsing, exception handling and the process
    exit code all live in ``cli.main``; this function only delegates to it.
    """
    run_cli_main()


if __name__ == "__main__":
    entry_point()
