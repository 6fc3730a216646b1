/** Startup flags: --mode stub|classifier|classifier+lm --port N --pad TOKEN
 *  --labels N (stub) --model path.json (classifier) --corpus path.jsonl (lm). */

import { createModelServer, type Mode, type ServerConfig } from "./server.js";

function parseArgs(argv: string[]): { config: ServerConfig; port: number } {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--")) throw new Error(`unexpected argument ${key}`);
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`missing value for ${key}`);
    args.set(key.slice(2), value);
  }
  const mode = (args.get("mode") ?? "stub") as Mode;
  if (!["stub", "classifier", "classifier+lm"].includes(mode)) {
    throw new Error(`unknown mode ${mode}`);
  }
  return {
    config: {
      mode,
      pad: args.get("pad") ?? "<pad>",
      labelCount: Number(args.get("labels") ?? "2"),
      modelPath: args.get("model"),
      corpusPath: args.get("corpus"),
    },
    port: Number(args.get("port") ?? "8200"),
  };
}

const { config, port } = parseArgs(process.argv.slice(2));
const server = createModelServer(config);
server.listen(port, () => {
  const address = server.address();
  const actual = typeof address === "object" && address ? address.port : port;
  console.error(`model server (${config.mode}) listening on :${actual}`);
});
