import { AddressInfo } from "node:net";

import { loadConfig } from "./config";
import { createServer } from "./server";

function main(): void {
  const config = loadConfig();
  const server = createServer(config);
  server.listen(config.port, "127.0.0.1", () => {
    const address = server.address() as AddressInfo;
    // one machine-readable line so supervisors can pick up the bound port
    process.stdout.write(
      JSON.stringify({
        listening: true,
        port: address.port,
        model: config.model,
        device: config.device,
        max_batch: config.maxBatchSize,
      }) + "\n"
    );
  });
}

main();
