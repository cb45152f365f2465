from typing import Sequence

import Levenshtein

from subnet_forge.exceptions import DatasetError


def token_error_rate(refs: Sequence[Sequence[int]], hyps: Sequence[Sequence[int]]) -> float:
    """Corpus-level TER: total edit distance over total reference length."""
    if len(refs) != len(hyps):
        raise DatasetError(f"{len(refs)} references but {len(hyps)} hypotheses")
    errors = 0
    words = 0
    for ref, hyp in zip(refs, hyps):
        errors += Levenshtein.distance(list(ref), list(hyp))
        words += len(ref)
    if words == 0:
        raise DatasetError("Token error rate needs a nonzero total reference length")
    return errors / words


def accuracy(refs: Sequence[int], hyps: Sequence[int]) -> float:
    if len(refs) != len(hyps):
        raise DatasetError(f"{len(refs)} references but {len(hyps)} hypotheses")
    if not refs:
        raise DatasetError("Accuracy of an empty dataset is undefined")
    return sum(1 for r, h in zip(refs, hyps) if r == h) / len(refs)
