#!/usr/bin/env python3
"""Regenerates labeled.jsonl: template sentences with one company and one
risk mention, labeled by whether the sentence states an exposure.

Usage: python3 gen_labeled.py > labeled.jsonl
"""

import hashlib
import json
import random

COMPANIES = [
    "Acme Inc.", "Globex", "Initech", "Contoso", "Northwind", "Umbrella Corp.",
    "Hooli", "Vandelay", "Stark Industries", "Wayne Enterprises", "Soylent",
    "Tyrell", "Cyberdyne", "Massive Dynamic", "Wonka", "Oscorp",
]
RISKS = [
    "fine", "fraud", "bankruptcy", "currency devaluation", "demand risk",
    "cash-flow risk", "office fire risk", "copyright litigation risk",
    "strike", "recall", "data breach", "lawsuit", "supply shortage",
    "credit downgrade",
]
PEOPLE = [
    "Jane Doe", "John Smith", "Mary Major", "Richard Roe", "Ann Lee",
    "Tom Hill", "Sara Cole", "Ravi Rao",
]

POSITIVE = [
    "{C} are facing a {R} , said {P} .",
    "{C} is facing a {R} , said {P} .",
    "{C} is facing a {R} .",
    "{C} faces a {R} over its accounts .",
    "{C} warned of a {R} in its annual report .",
    "{C} was hit with a {R} by regulators .",
    "{C} disclosed a {R} to investors .",
    "Analysts say {C} is exposed to {R} .",
    "{C} could suffer a {R} this year , said {P} .",
    "{C} expects a {R} next quarter .",
    "A {R} threatens {C} , analysts said .",
    "Regulators imposed a {R} on {C} .",
]

NEGATIVE = [
    "I feel {R} , said {C} 's {P} .",
    "We feel {R} , said {C} 's {P} .",
    "Everything is {R} , said {C} 's {P} .",
    "I am {R} , said {C} 's {P} .",
    "{C} published a book about {R} .",
    "{C} sponsored a conference on {R} .",
    "{P} of {C} lectured on {R} at a university .",
    "{C} hired a consultant who studies {R} .",
    "A film about {R} was produced by {C} .",
    "{C} 's website explains what {R} means .",
]

BLOCKED = {
    "Microsoft are facing a fine , said Bill Gates .",
    "I feel fine , said Microsoft 's Bill Gates .",
}


def render(template, company, risk, person):
    """Returns (snippet, company span, risk span) in token offsets."""
    out, cspan, rspan = [], None, None
    for tok in template.split(" "):
        if tok == "{C}":
            words = company.split(" ")
            cspan = (len(out), len(out) + len(words))
            out.extend(words)
        elif tok == "{R}":
            words = risk.split(" ")
            rspan = (len(out), len(out) + len(words))
            out.extend(words)
        elif tok == "{P}":
            out.extend(person.split(" "))
        else:
            out.append(tok)
    return " ".join(out), cspan, rspan


def entity_id(company):
    return company.split(" ")[0].upper()


def risk_id(risk):
    return risk.lower()


def pair_id(doc_id, cspan, rspan, eid, rid):
    key = "\x1f".join(str(x) for x in (doc_id, 0, cspan[0], cspan[1], rspan[0], rspan[1], eid, rid))
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def main():
    rng = random.Random(20150101)
    records = []
    for label, templates, n in (("POSITIVE", POSITIVE, 200), ("NEGATIVE", NEGATIVE, 200)):
        seen = set()
        while len([r for r in records if r["label"] == label]) < n:
            t = rng.choice(templates)
            c, r, p = rng.choice(COMPANIES), rng.choice(RISKS), rng.choice(PEOPLE)
            snippet, cspan, rspan = render(t, c, r, p)
            if snippet in seen or snippet in BLOCKED:
                continue
            seen.add(snippet)
            idx = len(records)
            doc_id = "train-%04d" % idx
            eid, rid = entity_id(c), risk_id(r)
            day = 1 + idx % 28
            month = 1 + (idx // 28) % 12
            records.append({
                "pair_id": pair_id(doc_id, cspan, rspan, eid, rid),
                "entity_id": eid,
                "risk_type_id": rid,
                "doc_id": doc_id,
                "sent_index": 0,
                "company_start": cspan[0],
                "company_end": cspan[1],
                "risk_start": rspan[0],
                "risk_end": rspan[1],
                "snippet": snippet,
                "published_at": "2014-%02d-%02dT00:00:00Z" % (month, day),
                "ambiguous": False,
                "label": label,
                "annotator": "fixture",
                "labeled_at": "2015-01-15T00:00:00Z",
            })
    for rec in records:
        print(json.dumps(rec, sort_keys=True))


if __name__ == "__main__":
    main()
