// App-level behavior against a scripted mock server: page flow, inline
// errors, account updates, reconnecting status.

import { describe, expect, it } from "vitest";

import { RpcApi } from "../src/api.js";
import { App } from "../src/app.js";

type Script = (method: string, params: Record<string, unknown>) =>
  { ok: true; result: unknown } | { ok: false; code: string } | "offline";

function appWith(script: Script): App {
  const fetchFn = async (_url: string, init?: RequestInit): Promise<Response> => {
    const envelope = JSON.parse(String(init?.body));
    const out = script(envelope.method, envelope.params);
    if (out === "offline") throw new Error("connection refused");
    if (out.ok) return new Response(JSON.stringify({ ok: true, result: out.result }));
    return new Response(JSON.stringify({
      ok: false, error: { code: out.code, message: out.code } }));
  };
  const root = document.createElement("div");
  document.body.appendChild(root);
  return new App(root, new RpcApi("", fetchFn), { pollIntervalMs: 50 });
}

const BASE: Record<string, unknown> = {
  login: { token: "t", username: "alice" },
  open_sheet: { snapshot: "socialcalc-save 1 g\ncell A1 value n 5\n", last_seq: 1, origin: "me" },
  poll_changes: { envelopes: [], last_seq: 1 },
  poll_chat: { messages: [] },
  list_active: { users: ["alice"] },
  send_commands: { first_seq: 2, last_seq: 2 },
  update_account: { username: "alicia" },
};

function scripted(overrides: Record<string, unknown> = {}): Script {
  const table = { ...BASE, ...overrides };
  return (method) => {
    const hit = table[method];
    if (hit === "offline") return "offline";
    if (typeof hit === "string") return { ok: false, code: hit };
    return { ok: true, result: hit ?? {} };
  };
}

describe("app pages", () => {
  it("bad credentials surface on the login page", async () => {
    const app = appWith(scripted({ login: "BadCredentials" }));
    await app.doLogin("alice", "wrong", false);
    expect(app.view).toBe("login");
    expect(app.status).toContain("BadCredentials");
    expect(app.root.querySelector(".status")?.textContent).toContain("BadCredentials");
  });

  it("login then open lands on the grid with server cells", async () => {
    const app = appWith(scripted());
    await app.doLogin("alice", "s3cretpass", false);
    expect(app.view).toBe("picker");
    await app.doOpen("alice", "g", "secret", false);
    expect(app.view).toBe("sheet");
    expect(app.root.querySelector('td[data-addr="A1"]')?.textContent).toBe("5");
    app.stopPolling();
  });

  it("account update reports the new name", async () => {
    const app = appWith(scripted());
    await app.doLogin("alice", "s3cretpass", false);
    await app.doUpdateAccount("alicia", "");
    expect(app.client.username).toBe("alicia");
    expect(app.status).toContain("alicia");
  });

  it("offline poll flips the reconnecting banner and preserves the grid", async () => {
    let offline = false;
    const script: Script = (method) => {
      if (offline && (method === "poll_changes" || method === "send_commands")) {
        return "offline";
      }
      return { ok: true, result: (BASE[method] as Record<string, unknown>) ?? {} };
    };
    const app = appWith(script);
    await app.doLogin("alice", "s3cretpass", false);
    await app.doOpen("alice", "g", "secret", false);
    app.stopPolling();

    offline = true;
    await app.pollNow();
    app.stopPolling();
    expect(app.reconnecting).toBe(true);
    expect(app.root.querySelector(".status")?.textContent).toBe("reconnecting…");
    expect(app.root.querySelector('td[data-addr="A1"]')?.textContent).toBe("5");

    offline = false;
    await app.pollNow();
    app.stopPolling();
    expect(app.reconnecting).toBe(false);
  });
});
