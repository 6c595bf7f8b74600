#!/usr/bin/env python3
"""Entity pools and dense description generation.

Shows the built-in pools, the prompt template an external text backend would
receive, length-controlled procedural generation, and how noun/adjective
statistics grow with the requested length.
"""

from grounddesk import build_entity_pool, generate_descriptions, render_llm_prompt, text_stats
from grounddesk.corpus import DescriptionSpec

pool = build_entity_pool("desk20")
print(f"desk20 pool: {len(pool)} categories")
for cat in pool[:4]:
    print(f"  {cat.id:2d} {cat.name:14s} attrs={', '.join(cat.attribute_vocab[:4])}...")

avocado = next(c for c in pool if c.name == "avocado")
spec = DescriptionSpec(num_descriptions=20, target_length_words=10, seed=7)

print("\nPrompt an external language backend would receive:")
print(" ", render_llm_prompt(avocado, spec))

print("\n20 procedural descriptions for 'avocado' (target 10 words, seed 7):")
descs = generate_descriptions(avocado, spec)
for d in descs[:8]:
    print(f"  [{len(d.text.split()):2d} words] {d.text}")
print(f"  ... and {len(descs) - 8} more, all distinct")

print("\nDescription complexity scales with the requested length:")
print("  target  mean nouns  mean adjectives")
for nw in (6, 8, 10, 12):
    rows = []
    for cat in pool:
        rows.extend(generate_descriptions(cat, DescriptionSpec(10, nw, seed=0)))
    stats = text_stats(rows)
    print(f"  {nw:4d}    {stats.mean_nouns:8.2f}    {stats.mean_adjectives:8.2f}")
