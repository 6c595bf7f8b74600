#!/usr/bin/env python3
"""Phrase structure of generated descriptions.

Every procedural description parses into a subject phrase plus relation
clauses; "without" clauses mark expressions of absence.
"""

from grounddesk import is_absence, noun_phrases, parse
from grounddesk.langparse import format_tree

for text in ("an avocado lying on a cutting board",
             "a ripe green avocado inside a large white bowl",
             "a dog without dots",
             "person"):
    tree = parse(text)
    print(format_tree(tree))
    print(f"  noun phrases: {len(noun_phrases(tree))}, absence: {is_absence(tree)}\n")

print("Unparseable text reports the first offending token:")
try:
    parse("an avocado quickly resting")
except Exception as exc:
    print(f"  {exc}")
