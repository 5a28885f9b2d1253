#!/usr/bin/env python3
"""Regenerates the pinned prompt fixtures from the prompt listings in paper.md.

Placeholders are substituted with plain str.replace, independently of the
Rust template filler, so the fixtures can serve as a test oracle.
"""
import pathlib
import re

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIX = ROOT / "crates/core/tests/fixtures"

QUESTION = "What are the five most frequently prescribed medications for patients in their 40s since 2100?"
VIZ_NAMES = "scatterplot, bar chart, line chart, histogram"
COLUMNS = "drug\nprescription_count"


def listing(text, label):
    m = re.search(r"label=\{" + re.escape(label) + r"\},.*?frame=single\]\n(.*?)\n\\end\{lstlisting\}", text, re.S)
    return "\n".join(line[1:] if line.startswith("\t") else line for line in m.group(1).split("\n"))


def main():
    doc = (ROOT / "paper.md").read_text()
    sql = listing(doc, "lst:sql-generation")
    viz = listing(doc, "lst:viz-generation")

    schema = (FIX / "admissions_schema.txt").read_text()
    demos = (FIX / "demo_block.txt").read_text()
    filled = sql.replace("{schema_info}", schema).replace("{fewshot_demo}", demos).replace("{question}", QUESTION)
    (FIX / "sql_prompt_expected.txt").write_text(filled)

    filled = viz.replace("{viz_names}", VIZ_NAMES).replace("{columns}", COLUMNS).replace("{question}", QUESTION)
    (FIX / "viz_prompt_expected.txt").write_text(filled)


if __name__ == "__main__":
    main()
