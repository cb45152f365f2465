import sys

from subnet_forge.cli import cli_dispatch


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == '__main__':
    main()
