#!/usr/bin/env python3
"""Writes the synthetic Domainmodel replay corpus used by tests and examples.

Responses are built from fixture texts (not from a live model), so the corpus
exercises the replay path, fence stripping and the empty-response case.
"""
import hashlib
import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "domainmodel"
PROVIDER_ID = "synthetic-fixture"

HINTS = [
    "Here is the initial version of the grammar (i.e., Grammar 1). Please remember this for future reference.\n\n",
    "Here is the evolved version of the grammar (i.e., Grammar 2). Please remember this for future reference.\n\n",
    "Here is the initial version of the instance (i.e., Instance 1), which follows Grammar 1. "
    "Please remember this for future reference.\n\n",
]

FINAL_PROMPT = (
    "grammar_1 is the initial grammar of the DSL. We evolved it to get grammar_2. instance_1 was originally a "
    "text instance that followed grammar_1. Now I want you to analyze the differences between the two versions "
    "of the grammar and, based on this difference, modify instance_1 and get instance_2, which will follow "
    "grammar_2. Please address the following things:\n"
    "1.\tWhen evolving the instance, please do not omit any mandatory elements, such as characters enclosed by "
    "single quotes.\n"
    "2.\tIf grammar_2 adds a new grammar rule or a new attribute that is optional or in an \"OR\" relationship "
    "(i.e., |), then please do not instantiate it.\n"
    "3.\tDo not miss or add any auxiliary information in the instance, e.g., comments, formats (white space, "
    "indents, tabs, empty lines, etc.)."
)


def read(name):
    return (ROOT / name).read_text(encoding="utf-8")


def main():
    texts = [read("grammar1.xtext"), read("grammar2.xtext"), read("instance1.dmodel")]
    messages = [{"role": "user", "content": h + t} for h, t in zip(HINTS, texts)]
    messages.append({"role": "user", "content": FINAL_PROMPT})
    canonical = json.dumps({"messages": messages, "provider_id": PROVIDER_ID},
                           sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    key = hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    good = read("rules_instance2.dmodel")
    fenced = "```\n" + good + "```\n"
    responses = [good, fenced, good, good, fenced, good, good, good, read("mde_instance2.dmodel"), ""]
    clocks = [21.37, 19.84, 23.05, 20.66, 22.41, 18.93, 24.12, 20.08, 19.57, 25.6]

    out = ROOT / "replay" / "transcripts.jsonl"
    out.parent.mkdir(exist_ok=True)
    with out.open("w", encoding="utf-8") as f:
        for response, clock in zip(responses, clocks):
            record = {"key": key, "provider_id": PROVIDER_ID, "request_messages": messages,
                      "response": response, "wall_clock_s": clock}
            f.write(json.dumps(record, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
