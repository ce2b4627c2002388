"""Writes a small labelled screening set: relevant papers mention refactoring."""
import csv
import random
import sys

FILLER = ["software", "testing", "metrics", "agile", "requirements", "defects", "maintenance", "evolution",
          "performance", "security", "cloud", "mobile", "empirical", "survey", "tools", "process"]


def main(path="toy.csv", n=60, seed=1):
    rng = random.Random(seed)
    with open(path, "w", newline="") as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["id", "title", "abstract", "year", "n_cites", "n_authors", "paper_type", "doi", "label"])
        for i in range(n):
            relevant = i % 4 == 0
            words = rng.sample(FILLER, 3)
            title = " ".join((["Refactoring"] if relevant else []) + words).capitalize()
            abstract = " ".join(rng.sample(FILLER, 8))
            if relevant:
                abstract += " refactor code smells"
            w.writerow([f"p{i:03d}", title, abstract, rng.randint(2000, 2019), rng.randint(0, 99), rng.randint(1, 8),
                        rng.choice(["journal", "conference"]), f"10.9999/toy.{i}", int(relevant)])


if __name__ == "__main__":
    main(*sys.argv[1:2])
