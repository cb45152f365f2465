# Lets pytest import subnet_forge from the repository root; the tests import their helpers as siblings.
