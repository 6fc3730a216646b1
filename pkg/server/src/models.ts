/**
 * The three prediction/completion backends:
 *  - stub: seeded deterministic distribution per instance hash, pad-filled
 *    completions; needs no files and is the CI conformance target.
 *  - classifier: token-weight softmax loaded from a JSON file.
 *  - classifier+lm: adds a bigram language model fitted from a JSONL corpus,
 *    filling unobserved positions left to right with seeded sampling.
 */

import { readFileSync } from "node:fs";
import { mulberry32, sequenceSeed, weightedIndex } from "./rng.js";

export interface Predictor {
  labelCount: number;
  predict(tokens: string[]): number[];
}

export interface Completer {
  complete(observed: Map<number, string>, n: number, count: number, seed: number): string[][];
}

export class StubPredictor implements Predictor {
  constructor(public labelCount: number) {
    if (labelCount < 1) throw new Error("label count must be >= 1");
  }

  predict(tokens: string[]): number[] {
    const rand = mulberry32(sequenceSeed(tokens));
    const raw: number[] = [];
    for (let i = 0; i < this.labelCount; i++) raw.push(0.05 + rand());
    const total = raw.reduce((a, b) => a + b, 0);
    return raw.map((v) => v / total);
  }
}

export class StubCompleter implements Completer {
  constructor(private pad: string) {}

  complete(observed: Map<number, string>, n: number, count: number, _seed: number): string[][] {
    const row: string[] = [];
    for (let i = 0; i < n; i++) row.push(observed.get(i) ?? this.pad);
    const out: string[][] = [];
    for (let c = 0; c < count; c++) out.push([...row]);
    return out;
  }
}

interface ClassifierFile {
  labels: number;
  weights: Record<string, number[]>;
}

export class TokenWeightClassifier implements Predictor {
  readonly labelCount: number;
  private weights: Map<string, number[]>;

  constructor(spec: ClassifierFile) {
    this.labelCount = spec.labels;
    if (this.labelCount < 1) throw new Error("classifier declares no labels");
    this.weights = new Map(Object.entries(spec.weights));
    for (const [token, row] of this.weights) {
      if (row.length !== this.labelCount) {
        throw new Error(
          `weight row for ${JSON.stringify(token)} has ${row.length} entries, expected ${this.labelCount}`,
        );
      }
    }
  }

  static load(path: string): TokenWeightClassifier {
    return new TokenWeightClassifier(JSON.parse(readFileSync(path, "utf-8")) as ClassifierFile);
  }

  predict(tokens: string[]): number[] {
    const logits = new Array<number>(this.labelCount).fill(0);
    for (const token of tokens) {
      const row = this.weights.get(token);
      if (row) for (let i = 0; i < this.labelCount; i++) logits[i] += row[i];
    }
    const max = Math.max(...logits);
    const exp = logits.map((v) => Math.exp(v - max));
    const total = exp.reduce((a, b) => a + b, 0);
    return exp.map((v) => v / total);
  }
}

const START = "";

/** Bigram model with unigram fallback, fitted from JSONL {"tokens": [...]} rows. */
export class BigramCompleter implements Completer {
  private bigrams = new Map<string, Map<string, number>>();
  private unigrams = new Map<string, number>();

  constructor(sequences: string[][]) {
    if (sequences.length === 0) throw new Error("empty corpus");
    for (const tokens of sequences) {
      let prev = START;
      for (const token of tokens) {
        this.unigrams.set(token, (this.unigrams.get(token) ?? 0) + 1);
        let next = this.bigrams.get(prev);
        if (!next) this.bigrams.set(prev, (next = new Map()));
        next.set(token, (next.get(token) ?? 0) + 1);
        prev = token;
      }
    }
  }

  static load(path: string): BigramCompleter {
    const sequences: string[][] = [];
    for (const line of readFileSync(path, "utf-8").split("\n")) {
      const trimmed = line.trim();
      if (!trimmed) continue;
      const row = JSON.parse(trimmed) as { tokens: unknown[] };
      sequences.push(row.tokens.map(String));
    }
    return new BigramCompleter(sequences);
  }

  private drawNext(prev: string, rand: () => number): string {
    const table = this.bigrams.get(prev) ?? this.unigrams;
    const entries = [...table.entries()];
    const idx = weightedIndex(
      entries.map(([, count]) => count),
      rand,
    );
    return entries[idx][0];
  }

  complete(observed: Map<number, string>, n: number, count: number, seed: number): string[][] {
    const out: string[][] = [];
    for (let c = 0; c < count; c++) {
      const rand = mulberry32((seed + 0x9e3779b9 * c) >>> 0);
      const row: string[] = [];
      for (let i = 0; i < n; i++) {
        const fixed = observed.get(i);
        if (fixed !== undefined) {
          row.push(fixed);
        } else {
          const prev = i === 0 ? START : row[i - 1];
          row.push(this.drawNext(prev, rand));
        }
      }
      out.push(row);
    }
    return out;
  }
}
