#!/usr/bin/env python3
"""Token embeddings from a Hugging Face encoder for the race binary.

Reads one UTF-8 document on stdin and prints
  {"offsets": [[start, end], ...], "chunks": [{"start": s, "embeddings": [[...], ...]}, ...]}
where offsets are byte ranges into the input and each chunk holds the final
hidden states of one window of content tokens. The window layout must match
the C++ side: windows of W tokens advancing by W - overlap while they end
before the last token, then one final window ending at the last token.
"""

import argparse
import json
import sys


def plan_chunks(k, window, overlap):
    if k <= window:
        return [(0, k)]
    stride = window - overlap
    chunks = []
    start = 0
    while start + window < k:
        chunks.append((start, start + window))
        start += stride
    chunks.append((k - window, k))
    return chunks


def byte_offsets(text, char_offsets):
    # Prefix byte lengths so character offsets map to byte offsets.
    prefix = [0]
    for ch in text:
        prefix.append(prefix[-1] + len(ch.encode("utf-8")))
    return [[prefix[a], prefix[b]] for a, b in char_offsets]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default="roberta-base")
    ap.add_argument("--revision", default="main")
    ap.add_argument("--window", type=int, default=510)
    ap.add_argument("--overlap", type=int, default=64)
    args = ap.parse_args()

    import torch
    from transformers import AutoModel, AutoTokenizer

    text = sys.stdin.buffer.read().decode("utf-8")
    tok = AutoTokenizer.from_pretrained(args.model, revision=args.revision, use_fast=True)
    model = AutoModel.from_pretrained(args.model, revision=args.revision)
    model.eval()

    enc = tok(text, add_special_tokens=False, return_offsets_mapping=True)
    ids = enc["input_ids"]
    # Drop zero-width tokens; the C++ side requires non-empty spans.
    keep = [i for i, (a, b) in enumerate(enc["offset_mapping"]) if b > a]
    ids = [ids[i] for i in keep]
    offsets = byte_offsets(text, [enc["offset_mapping"][i] for i in keep])

    chunks = []
    with torch.no_grad():
        for start, end in plan_chunks(len(ids), args.window, args.overlap):
            window_ids = tok.build_inputs_with_special_tokens(ids[start:end])
            out = model(input_ids=torch.tensor([window_ids]))
            hidden = out.last_hidden_state[0]
            # Specials wrap the content: one in front, one behind.
            body = hidden[1 : 1 + (end - start)]
            chunks.append({"start": start, "embeddings": body.tolist()})

    json.dump({"offsets": offsets, "chunks": chunks}, sys.stdout)


if __name__ == "__main__":
    main()
