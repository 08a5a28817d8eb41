"""Regenerates desk.csv, the small two-class review corpus used by the
default pipeline. Output uses the Yelp polarity layout: "label","text"
with 1 = negative and 2 = positive."""

import csv
import random
import sys

FOODS = ["food", "pizza", "pasta", "burger", "soup", "salad", "coffee", "steak",
         "sushi", "bread", "dessert", "fries", "tacos", "curry", "cake"]
PLACES = ["place", "restaurant", "cafe", "bar", "diner", "bakery", "spot"]
STAFF = ["service", "staff", "waiter", "owner", "server", "manager"]
POS_ADJ = ["good", "great", "amazing", "delicious", "fresh", "excellent",
           "tasty", "perfect", "wonderful", "lovely"]
NEG_ADJ = ["bad", "awful", "terrible", "bland", "cold", "stale", "greasy",
           "disgusting", "horrible", "soggy"]
POS_STAFF = ["friendly", "helpful", "kind", "attentive", "quick", "polite"]
NEG_STAFF = ["rude", "slow", "lazy", "careless", "unfriendly", "grumpy"]
INTENS = ["really", "very", "so", "quite", "super"]
POS_VERB = ["love", "enjoyed", "recommend", "like", "adore"]
NEG_VERB = ["hate", "regret", "avoid", "dislike"]
TIMES = ["tonight", "today", "yesterday", "last night", "this time"]


def pick(rng, xs):
    return rng.choice(xs)


def sentence(rng, positive):
    adj = POS_ADJ if positive else NEG_ADJ
    other = NEG_ADJ if positive else POS_ADJ
    staff_adj = POS_STAFF if positive else NEG_STAFF
    verb = POS_VERB if positive else NEG_VERB
    templates = [
        lambda: f"the {pick(rng, FOODS)} was {pick(rng, adj)} .",
        lambda: f"the {pick(rng, FOODS)} was {pick(rng, INTENS)} {pick(rng, adj)} .",
        lambda: f"the {pick(rng, STAFF)} was {pick(rng, staff_adj)} .",
        lambda: f"i {pick(rng, verb)} this {pick(rng, PLACES)} .",
        lambda: f"the {pick(rng, FOODS)} was not {pick(rng, other)} .",
        lambda: f"{pick(rng, TIMES)} the {pick(rng, FOODS)} was {pick(rng, adj)} .",
        lambda: f"the {pick(rng, FOODS)} and the {pick(rng, FOODS)} were {pick(rng, adj)} .",
        lambda: f"{pick(rng, STAFF)} was {pick(rng, staff_adj)} and the {pick(rng, FOODS)} was {pick(rng, adj)} .",
        lambda: ("we will come back soon ." if positive else "we will never come back ."),
        lambda: f"a {pick(rng, adj)} {pick(rng, PLACES)} with {pick(rng, adj)} {pick(rng, FOODS)} .",
        lambda: f"this {pick(rng, PLACES)} is {pick(rng, INTENS)} {pick(rng, adj)} !",
    ]
    return pick(rng, templates)()


def main(path, n=2000, seed=7):
    rng = random.Random(seed)
    rows = []
    for i in range(n):
        positive = i % 2 == 0
        rows.append(("2" if positive else "1", sentence(rng, positive)))
    with open(path, "w", newline="") as f:
        csv.writer(f, quoting=csv.QUOTE_ALL).writerows(rows)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "desk.csv")
