/**
 * Node bindings for the finmlm masking pipeline.
 *
 * A {@link BoundMasker} wraps an immutable (lexicon, policy, vocab) triple and
 * exposes batch masking with bit-exact parity to `finmlm mask`: every call
 * shells out to the core CLI with the same files, so there is one masking
 * code path and outputs can be verified by diffing. Data crosses the
 * boundary as plain integer arrays and records, never as opaque handles.
 *
 * The core `finmlm` executable must be on PATH (or passed via
 * `{ cliPath }` / the FINMLM_BIN environment variable).
 */

import { execFile } from "node:child_process";
import { promisify } from "node:util";
import * as fs from "node:fs/promises";
import * as os from "node:os";
import * as path from "node:path";

const execFileAsync = promisify(execFile);

export type Stage = "word" | "word+phrase";

/** One masked span in post-collapse coordinates (raw core field names). */
export interface SpanRecord {
  start: number;
  end: number;
  kind: number;
  orig_length: number;
  target_ids: number[];
  term_id: number;
}

/** One masked sequence, exactly as the core CLI serializes it. */
export interface MaskedRecord {
  input_ids: number[];
  labels: number[];
  replaced_flags: number[];
  spans: SpanRecord[];
}

/** Per-example failure; the batch continues past it. */
export interface ErrorRecord {
  error: string;
  index: number;
}

export type BatchEntry = MaskedRecord | ErrorRecord;

export function isErrorRecord(entry: BatchEntry): entry is ErrorRecord {
  return "error" in entry;
}

/** Masking hyperparameters as stored in the policy file. */
export interface PolicyInfo {
  total_rate: number;
  fin_share: number;
  phrase_rate: number;
  geo_p: number;
  max_span: number;
  replace_split: number[];
  stage: string;
  seed: number;
  use_spans: boolean;
  span_share: number;
}

export interface BindOptions {
  /** Path to the core CLI; defaults to $FINMLM_BIN or "finmlm". */
  cliPath?: string;
}

export class BindingError extends Error {
  constructor(message: string, readonly file?: string) {
    super(file ? `${message}: ${file}` : message);
    this.name = "BindingError";
  }
}

/** JSON.stringify with recursively sorted keys; matches the core's canonical
 * form (sorted keys, no whitespace) for integer/string payloads. */
export function canonicalJson(value: unknown): string {
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (value !== null && typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => JSON.stringify(k) + ":" + canonicalJson(v));
    return "{" + entries.join(",") + "}";
  }
  return JSON.stringify(value);
}

async function readJsonFile(file: string): Promise<Record<string, unknown>> {
  let text: string;
  try {
    text = await fs.readFile(file, "utf-8");
  } catch {
    throw new BindingError("cannot read file", file);
  }
  try {
    const parsed = JSON.parse(text);
    if (parsed === null || typeof parsed !== "object" || Array.isArray(parsed)) {
      throw new Error("not an object");
    }
    return parsed as Record<string, unknown>;
  } catch {
    throw new BindingError("file is not a JSON object", file);
  }
}

/**
 * Immutable handle over (lexicon file, policy file, vocab file).
 *
 * Construction validates formats and versions eagerly so masking calls fail
 * only on per-example problems. Handles are safe to share: each maskBatch
 * call is independent and carries its own seed.
 */
export class BoundMasker {
  private constructor(
    readonly lexiconFile: string,
    readonly policyFile: string,
    readonly vocabFile: string,
    private readonly cliPath: string,
    private readonly policyInfo: PolicyInfo,
    private readonly coreVersion: string,
    readonly sourceDigest: string,
  ) {}

  static async bind(
    lexiconFile: string,
    policyFile: string,
    vocabFile: string,
    options: BindOptions = {},
  ): Promise<BoundMasker> {
    const cliPath = options.cliPath ?? process.env.FINMLM_BIN ?? "finmlm";

    const lex = await readJsonFile(lexiconFile);
    if (lex.version !== 1) {
      throw new BindingError(
        `unsupported lexicon format version ${JSON.stringify(lex.version)}`,
        lexiconFile,
      );
    }
    if (!Array.isArray(lex.terms) || typeof lex.source_digest !== "string") {
      throw new BindingError("lexicon file is missing terms/source_digest", lexiconFile);
    }

    const pol = await readJsonFile(policyFile);
    if (pol.version !== 1) {
      throw new BindingError(
        `unsupported policy format version ${JSON.stringify(pol.version)}`,
        policyFile,
      );
    }
    for (const field of ["total_rate", "fin_share", "phrase_rate", "geo_p", "max_span"]) {
      if (typeof pol[field] !== "number") {
        throw new BindingError(`policy file is missing numeric "${field}"`, policyFile);
      }
    }

    let vocabText: string;
    try {
      vocabText = await fs.readFile(vocabFile, "utf-8");
    } catch {
      throw new BindingError("cannot read vocab file", vocabFile);
    }
    if (!vocabText.trim()) {
      throw new BindingError("vocab file is empty", vocabFile);
    }

    let version: string;
    try {
      const { stdout } = await execFileAsync(cliPath, ["--version"]);
      version = stdout.trim().replace(/^finmlm\s+/, "");
    } catch (err) {
      throw new BindingError(`core CLI not runnable (${String(err)})`, cliPath);
    }

    return new BoundMasker(
      lexiconFile,
      policyFile,
      vocabFile,
      cliPath,
      pol as unknown as PolicyInfo,
      version,
      lex.source_digest as string,
    );
  }

  /** The core's version string, e.g. "0.1.0". */
  version(): string {
    return this.coreVersion;
  }

  /** The masking hyperparameters this handle was bound to. */
  policy(): PolicyInfo {
    return { ...this.policyInfo };
  }

  /**
   * Mask a batch of token-id sequences.
   *
   * Output order matches input order; sequences with out-of-range ids yield
   * `{error, index}` entries while the rest of the batch proceeds. The
   * result is bit-identical to `finmlm mask --format tokens` on the same
   * sequences, stage, and seed.
   */
  async maskBatch(
    sequences: number[][],
    stage: Stage,
    seed: number,
  ): Promise<BatchEntry[]> {
    if (!Number.isInteger(seed)) {
      throw new BindingError(`seed must be an integer, got ${seed}`);
    }
    if (sequences.length === 0) {
      return [];
    }
    const workDir = await fs.mkdtemp(path.join(os.tmpdir(), "finmlm-bind-"));
    try {
      const corpusFile = path.join(workDir, "batch.jsonl");
      const outDir = path.join(workDir, "out");
      const lines = sequences.map((tokens) => JSON.stringify({ tokens }));
      await fs.writeFile(corpusFile, lines.join("\n") + "\n", "utf-8");
      try {
        await execFileAsync(this.cliPath, [
          "mask",
          "--corpus", corpusFile,
          "--lexicon", this.lexiconFile,
          "--vocab", this.vocabFile,
          "--policy", this.policyFile,
          "--stage", stage,
          "--seed", String(seed),
          "--format", "tokens",
          "--out", outDir,
        ]);
      } catch (err) {
        const stderr = (err as { stderr?: string }).stderr ?? String(err);
        throw new BindingError(`core mask invocation failed: ${stderr.trim()}`);
      }
      const raw = await fs.readFile(path.join(outDir, "masked.jsonl"), "utf-8");
      return raw
        .split("\n")
        .filter((ln) => ln.trim().length > 0)
        .map((ln) => JSON.parse(ln) as BatchEntry);
    } finally {
      await fs.rm(workDir, { recursive: true, force: true });
    }
  }
}

/** Functional alias for {@link BoundMasker.bind}. */
export async function bindMasker(
  lexiconFile: string,
  policyFile: string,
  vocabFile: string,
  options: BindOptions = {},
): Promise<BoundMasker> {
  return BoundMasker.bind(lexiconFile, policyFile, vocabFile, options);
}
