export interface ServerConfig {
  model: string;
  device: string;
  maxBatchSize: number;
  maxTextLength: number;
  port: number;
}

const DEFAULTS: ServerConfig = {
  model: "trigram-512",
  device: "cpu",
  maxBatchSize: 128,
  maxTextLength: 65536,
  port: 8787,
};

function intEnv(name: string, fallback: number): number {
  const raw = process.env[name];
  if (raw === undefined || raw === "") return fallback;
  const value = Number.parseInt(raw, 10);
  if (!Number.isFinite(value)) throw new Error(`${name} must be an integer, got "${raw}"`);
  return value;
}

/** Environment first, then --model/--port/--max-batch style flags. */
export function loadConfig(argv: string[] = process.argv.slice(2)): ServerConfig {
  const config: ServerConfig = {
    model: process.env.EMBED_MODEL ?? DEFAULTS.model,
    device: process.env.EMBED_DEVICE ?? DEFAULTS.device,
    maxBatchSize: intEnv("EMBED_MAX_BATCH", DEFAULTS.maxBatchSize),
    maxTextLength: intEnv("EMBED_MAX_TEXT_LENGTH", DEFAULTS.maxTextLength),
    port: intEnv("EMBED_PORT", DEFAULTS.port),
  };
  for (let i = 0; i < argv.length; i++) {
    const next = () => {
      const value = argv[++i];
      if (value === undefined) throw new Error(`${argv[i - 1]} needs a value`);
      return value;
    };
    switch (argv[i]) {
      case "--model":
        config.model = next();
        break;
      case "--port":
        config.port = Number.parseInt(next(), 10);
        break;
      case "--max-batch":
        config.maxBatchSize = Number.parseInt(next(), 10);
        break;
      default:
        throw new Error(`unknown argument ${argv[i]}`);
    }
  }
  if (config.maxBatchSize < 1) throw new Error("max batch size must be >= 1");
  if (config.port < 0 || config.port > 65535) throw new Error("port out of range");
  return config;
}
