/**
 * NDJSON reward bridge.
 *
 * Reads request lines ({"output", "ground_truth", "mode"?}) from a stream,
 * forwards well-formed lines to a child `promptgate score` process, and
 * writes one response line per request line in input order. Malformed lines
 * yield an error object at their position and the stream keeps going, so a
 * training loop never stalls on one bad record.
 */

import { spawn, ChildProcessWithoutNullStreams } from 'node:child_process';
import { once } from 'node:events';
import * as readline from 'node:readline';
import { Readable, Writable } from 'node:stream';

export interface BridgeOptions {
  /** Executable plus leading args for the core CLI. Default: ["promptgate"]. */
  coreCommand?: string[];
  /** Default scoring mode applied to lines without one. */
  mode?: string;
}

const MODES = new Set(['full', 'stage1', 'stage2', 'stage3']);

export function coreCommand(options: BridgeOptions): string[] {
  if (options.coreCommand && options.coreCommand.length > 0) {
    return options.coreCommand;
  }
  const env = process.env.PROMPTGATE_BIN;
  return env ? env.split(' ') : ['promptgate'];
}

export function spawnCore(options: BridgeOptions): ChildProcessWithoutNullStreams {
  const [cmd, ...args] = coreCommand(options);
  const mode = options.mode ?? 'full';
  if (!MODES.has(mode)) {
    throw new Error(`unknown scoring mode '${mode}'`);
  }
  return spawn(cmd, [...args, 'score', '--in', '-', '--mode', mode], {
    stdio: ['pipe', 'pipe', 'pipe'],
  });
}

/** A request line is forwardable when it parses to a JSON object. */
export function validateLine(line: string): string | null {
  let parsed: unknown;
  try {
    parsed = JSON.parse(line);
  } catch (err) {
    return `BridgeProtocolError: invalid JSON: ${(err as Error).message}`;
  }
  if (parsed === null || typeof parsed !== 'object' || Array.isArray(parsed)) {
    return 'BridgeProtocolError: request line must be a JSON object';
  }
  return null;
}

interface Slot {
  resolved: boolean;
  value: string;
}

async function writeLine(output: Writable, line: string): Promise<void> {
  if (!output.write(line + '\n')) {
    await once(output, 'drain');
  }
}

/**
 * Pump request lines from input to the core process, writing responses to
 * output in input order. Resolves with the number of lines processed.
 */
export async function runBridge(
  input: Readable,
  output: Writable,
  options: BridgeOptions = {},
): Promise<number> {
  const child = spawnCore(options);
  const slots: Slot[] = [];
  const pendingSlots: number[] = [];
  let flushed = 0;
  let flushing = Promise.resolve();

  const flush = (): Promise<void> => {
    flushing = flushing.then(async () => {
      while (flushed < slots.length && slots[flushed].resolved) {
        await writeLine(output, slots[flushed].value);
        flushed += 1;
      }
    });
    return flushing;
  };

  const resolveSlot = (index: number, value: string): Promise<void> => {
    slots[index] = { resolved: true, value };
    return flush();
  };

  const stderrChunks: string[] = [];
  child.stderr.setEncoding('utf-8');
  child.stderr.on('data', (chunk: string) => stderrChunks.push(chunk));

  // failures surface through childFailure after the close barrier, so no
  // rejection can fire while the input loop still runs
  let childFailure: Error | null = null;
  const childClosed = new Promise<void>((resolve) => {
    child.on('error', (err) => {
      childFailure = new Error(`cannot run core scorer: ${err.message}`);
      resolve();
    });
    child.on('close', (code) => {
      if (code !== 0 && code !== null && childFailure === null) {
        childFailure = new Error(`core scorer exited with ${code}: ${stderrChunks.join('')}`);
      }
      resolve();
    });
  });
  child.stdin.on('error', () => {
    // broken pipe after a child failure; reported via childFailure
  });

  const childLines = readline.createInterface({ input: child.stdout, crlfDelay: Infinity });
  childLines.on('line', (line) => {
    const slot = pendingSlots.shift();
    if (slot !== undefined) {
      void resolveSlot(slot, line);
    }
  });

  const requestLines = readline.createInterface({ input, crlfDelay: Infinity });
  for await (const raw of requestLines) {
    if (childFailure !== null) {
      break;
    }
    if (raw.trim() === '') {
      continue;
    }
    const index = slots.length;
    slots.push({ resolved: false, value: '' });
    const problem = validateLine(raw);
    if (problem !== null) {
      await resolveSlot(index, JSON.stringify({ error: problem }));
      continue;
    }
    pendingSlots.push(index);
    if (!child.stdin.write(raw + '\n')) {
      await Promise.race([once(child.stdin, 'drain'), childClosed]);
    }
  }
  requestLines.close();
  if (!child.stdin.destroyed) {
    child.stdin.end();
  }

  await childClosed;
  if (childFailure !== null) {
    throw childFailure;
  }
  // a truncating core leaves forwarded slots unresolved
  for (const slot of pendingSlots.splice(0)) {
    await resolveSlot(slot, JSON.stringify({ error: 'BridgeProtocolError: no response from core scorer' }));
  }
  await flush();
  await flushing;
  return slots.length;
}
