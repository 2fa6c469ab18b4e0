"""Write small E2E-format CSV corpora for smoke runs and pipeline tests.

These are templated restaurant descriptions, not the real E2E data.
"""
import csv

import numpy as np

NAMES = ["The Eagle", "Alimentum", "Bibimbap House", "The Punter", "Zizzi", "Aromi",
         "Cotto", "Giraffe", "The Mill", "Strada"]
NEARS = ["Clare Hall", "The Sorrento", "Café Rouge", "Burger King", "Raja Indian Cuisine"]
FOODS = ["English", "French", "Italian", "Chinese", "Indian", "Japanese", "Fast food"]
PRICES = ["cheap", "moderate", "high", "less than £20", "more than £30"]
AREAS = ["riverside", "city centre"]
EATTYPES = ["restaurant", "pub", "coffee shop"]
FAMILY = ["yes", "no"]

_OPENERS = ["{name} is a {eat}", "There is a {eat} called {name}", "{name} is a nice {eat}"]


def _realize(rng, slots):
    eat = slots.get("eatType", "place")
    words = [rng.choice(_OPENERS).format(name=slots["name"], eat=eat)]
    if "food" in slots:
        words.append(rng.choice(["serving {} food", "that serves {} food",
                                 "offering {} dishes"]).format(slots["food"]))
    if "priceRange" in slots:
        words.append(rng.choice(["with {} prices", "in the {} price range"])
                     .format(slots["priceRange"]))
    if "area" in slots:
        words.append(rng.choice(["in the {}", "located in the {} area"]).format(slots["area"]))
    if "near" in slots:
        words.append(rng.choice(["near {}", "close to {}"]).format(slots["near"]))
    sentence = " ".join(words) + "."
    if "familyFriendly" in slots:
        sentence += (" It is family friendly." if slots["familyFriendly"] == "yes"
                     else " It is not family friendly.")
    return sentence


def _frame(rng):
    slots = {"name": rng.choice(NAMES)}
    optional = [("eatType", EATTYPES), ("food", FOODS), ("priceRange", PRICES),
                ("area", AREAS), ("near", NEARS), ("familyFriendly", FAMILY)]
    for slot, values in optional:
        if rng.random() < 0.55:
            slots[slot] = rng.choice(values)
    # Correlation between slots: coffee shops are never expensive.
    if slots.get("eatType") == "coffee shop" and slots.get("priceRange") in ("high", "more than £30"):
        slots["priceRange"] = "cheap"
    return slots


def _mr(slots):
    return ", ".join(f"{k}[{v}]" for k, v in slots.items())


def write_toy_corpus(path, n_frames, refs_per_frame=2, seed=0):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["mr", "ref"])
        for _ in range(n_frames):
            slots = _frame(rng)
            for _ in range(refs_per_frame):
                writer.writerow([_mr(slots), _realize(rng, slots)])
    return path


def write_toy_dataset(data_dir, n_train=200, n_test=30, seed=0):
    write_toy_corpus(data_dir / "trainset.csv", n_train, refs_per_frame=1, seed=seed)
    write_toy_corpus(data_dir / "testset_w_refs.csv", n_test, refs_per_frame=3, seed=seed + 1)
    return data_dir


# Sizes small enough for a full sweep in seconds; pass to load_config as overrides.
TOY_OVERRIDES = {
    "data.subset_size": "0",
    "lm.embedding_dim": "8", "lm.hidden_size": "16", "lm.epochs": "2",
    "made.hidden_sizes": "16, 16", "made.ensemble_size": "2", "made.epochs": "2",
    "model.embedding_dim": "8", "model.hidden_size": "16", "model.max_len": "30",
    "train.epochs": "2", "train.batch_size": "16",
    "experiment.runs": "2", "experiment.lambdas": "0.1",
}
