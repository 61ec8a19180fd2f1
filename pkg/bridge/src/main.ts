#!/usr/bin/env node
/**
 * CLI entry: reads NDJSON reward requests on stdin, writes NDJSON
 * breakdowns on stdout.
 *
 *   reward-bridge [--mode full|stage1|stage2|stage3] [--core "<cmd>"]
 */

import { runBridge } from './bridge.js';

function parseArgs(argv: string[]): { mode: string; coreCommand?: string[] } {
  let mode = 'full';
  let coreCommand: string[] | undefined;
  for (let i = 0; i < argv.length; i += 1) {
    const arg = argv[i];
    if (arg === '--mode') {
      mode = argv[++i] ?? '';
    } else if (arg === '--core') {
      const value = argv[++i] ?? '';
      coreCommand = value.split(' ').filter((p) => p.length > 0);
    } else if (arg === '--help' || arg === '-h') {
      process.stdout.write(
        'usage: reward-bridge [--mode full|stage1|stage2|stage3] [--core "<cmd>"]\n' +
          'Reads {"output", "ground_truth", "mode"?} JSON lines on stdin and\n' +
          'writes one reward breakdown JSON line per request, in order.\n',
      );
      process.exit(0);
    } else {
      process.stderr.write(`unknown argument: ${arg}\n`);
      process.exit(2);
    }
  }
  return { mode, coreCommand };
}

const options = parseArgs(process.argv.slice(2));

runBridge(process.stdin, process.stdout, options)
  .then(() => process.exit(0))
  .catch((err: Error) => {
    process.stderr.write(`reward-bridge: ${err.message}\n`);
    process.exit(1);
  });
