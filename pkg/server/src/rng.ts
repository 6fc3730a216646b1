/** Small deterministic PRNG + hashing so every mode is replayable by seed. */

/** FNV-1a 32-bit hash over a string. */
export function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

/** mulberry32: fast seeded generator of floats in [0, 1). */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Hash a token sequence into a PRNG seed (order-sensitive). */
export function sequenceSeed(tokens: string[], extra = 0): number {
  return (fnv1a(tokens.join("")) + extra) >>> 0;
}

/** Draw an index from unnormalized non-negative weights. */
export function weightedIndex(weights: number[], rand: () => number): number {
  let total = 0;
  for (const w of weights) total += w;
  let target = rand() * total;
  for (let i = 0; i < weights.length; i++) {
    target -= weights[i];
    if (target < 0) return i;
  }
  return weights.length - 1;
}
