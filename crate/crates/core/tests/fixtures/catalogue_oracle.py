"""Brute-force coverage oracle for the cataloguing attack.

Simulates an observer who sees Q puzzles, each showing k images drawn
without replacement from the d displeasing images and n-k drawn from the p
pleasing ones, and records the mean fraction of the m = p + d pool seen.
Writes catalogue_oracle.json next to this file.
"""
import json
import pathlib
import random

M, P, D, N, K, Q, REPEATS, SEED = 200, 100, 100, 9, 1, 100, 1000, 20240101


def one_run(rng):
    seen = [False] * M
    pleasing = list(range(P))
    displeasing = list(range(P, M))
    for _ in range(Q):
        for i in rng.sample(displeasing, K):
            seen[i] = True
        for i in rng.sample(pleasing, N - K):
            seen[i] = True
    return sum(seen) / M


def main():
    rng = random.Random(SEED)
    mean = sum(one_run(rng) for _ in range(REPEATS)) / REPEATS
    out = {
        "m": M, "p": P, "d": D, "n": N, "k": K, "q": Q,
        "repeats": REPEATS, "seed": SEED,
        "polarity": "find-displeasing",
        "mean_coverage": round(mean, 6),
    }
    path = pathlib.Path(__file__).with_name("catalogue_oracle.json")
    path.write_text(json.dumps(out, indent=2) + "\n")
    print(out)


if __name__ == "__main__":
    main()
