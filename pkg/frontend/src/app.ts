// The application: login/account page, sheet picker, and the live grid view
// with formula bar, presence list and chat panel. One poll in flight at a
// time; a failed poll shows "reconnecting" and recovers silently.

import { ApiError, RpcApi, isConnectFailure } from "./api.js";
import { SheetClient } from "./client.js";
import { CommandError, editToCommand } from "./commands.js";
import { formulaBarText, renderGrid } from "./grid.js";
import { Addr, formatAddress, parseAddress } from "./sheet.js";

type View = "login" | "picker" | "sheet";

export interface AppOptions {
  pollIntervalMs?: number;
}

export class App {
  client: SheetClient;
  view: View = "login";
  selection: Addr = { col: 1, row: 1 };
  status = "";
  reconnecting = false;
  private pollTimer: ReturnType<typeof setTimeout> | null = null;
  private pollInFlight = false;
  private stopped = false;
  readonly pollIntervalMs: number;

  constructor(public root: HTMLElement, api: RpcApi, options: AppOptions = {}) {
    this.client = new SheetClient(api);
    this.pollIntervalMs = options.pollIntervalMs ?? 500;
    this.render();
  }

  // --- pages -------------------------------------------------------------

  render(): void {
    this.root.textContent = "";
    if (this.view === "login") this.renderLogin();
    else if (this.view === "picker") this.renderPicker();
    else this.renderSheet();
  }

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K, attrs: Record<string, string> = {}, text = ""): HTMLElementTagNameMap[K] {
    const node = this.root.ownerDocument.createElement(tag);
    for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
    if (text) node.textContent = text;
    return node;
  }

  private statusLine(): HTMLElement {
    const line = this.el("div", { class: "status" }, this.status);
    if (this.reconnecting) {
      line.textContent = "reconnecting…";
      line.classList.add("reconnecting");
    }
    return line;
  }

  private renderLogin(): void {
    const form = this.el("div", { class: "page login" });
    form.appendChild(this.el("h1", {}, "gridmesh"));
    const user = this.el("input", { id: "login-username", placeholder: "username" });
    const pass = this.el("input", { id: "login-password", placeholder: "password", type: "password" });
    const loginBtn = this.el("button", { id: "login-submit" }, "Log in");
    const registerBtn = this.el("button", { id: "login-register" }, "Create account");
    loginBtn.addEventListener("click", () => void this.doLogin(user.value, pass.value, false));
    registerBtn.addEventListener("click", () => void this.doLogin(user.value, pass.value, true));
    for (const node of [user, pass, loginBtn, registerBtn]) form.appendChild(node);
    form.appendChild(this.statusLine());
    this.root.appendChild(form);
  }

  async doLogin(username: string, password: string, register: boolean): Promise<void> {
    try {
      if (register) await this.client.register(username, password);
      await this.client.login(username, password);
      this.view = "picker";
      this.status = `signed in as ${this.client.username}`;
    } catch (err) {
      this.status = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
    this.render();
  }

  private renderPicker(): void {
    const page = this.el("div", { class: "page picker" });
    page.appendChild(this.el("h1", {}, `sheets — ${this.client.username}`));
    const author = this.el("input", { id: "picker-author", placeholder: "author" });
    author.value = this.client.username;
    const group = this.el("input", { id: "picker-group", placeholder: "group" });
    const secret = this.el("input", { id: "picker-secret", placeholder: "sheet-id", type: "password" });
    const createBtn = this.el("button", { id: "picker-create" }, "Create sheet");
    const openBtn = this.el("button", { id: "picker-open" }, "Open sheet");
    createBtn.addEventListener("click", () =>
      void this.doOpen(this.client.username, group.value, secret.value, true));
    openBtn.addEventListener("click", () =>
      void this.doOpen(author.value, group.value, secret.value, false));
    for (const node of [author, group, secret, createBtn, openBtn]) page.appendChild(node);

    page.appendChild(this.el("h2", {}, "account"));
    const newUser = this.el("input", { id: "account-username", placeholder: "new username" });
    const newPass = this.el("input", { id: "account-password", placeholder: "new password", type: "password" });
    const updateBtn = this.el("button", { id: "account-update" }, "Update account");
    updateBtn.addEventListener("click", () =>
      void this.doUpdateAccount(newUser.value, newPass.value));
    for (const node of [newUser, newPass, updateBtn]) page.appendChild(node);
    page.appendChild(this.statusLine());
    this.root.appendChild(page);
  }

  async doUpdateAccount(newUsername: string, newPassword: string): Promise<void> {
    try {
      await this.client.updateAccount(newUsername || undefined, newPassword || undefined);
      this.status = `account updated; you are ${this.client.username}`;
    } catch (err) {
      this.status = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
    this.render();
  }

  async doOpen(author: string, group: string, secret: string, create: boolean): Promise<void> {
    try {
      if (create) await this.client.createSheet(group, secret);
      await this.client.open(author, group, secret);
      this.view = "sheet";
      this.selection = { col: 1, row: 1 };
      this.status = `${author}/${group}`;
      this.startPolling();
    } catch (err) {
      this.status = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    }
    this.render();
  }

  // --- the sheet view -------------------------------------------------------

  private renderSheet(): void {
    const page = this.el("div", { class: "page sheet" });

    const bar = this.el("div", { class: "toolbar" });
    bar.appendChild(this.el("span", { class: "sheet-key" },
      `${this.client.author}/${this.client.group}`));
    const cellName = this.el("span", { id: "cell-name" }, formatAddress(this.selection));
    bar.appendChild(cellName);
    const formulaInput = this.el("input", { id: "formula-input", spellcheck: "false" });
    formulaInput.value = formulaBarText(this.client.displaySheet(), this.selection);
    formulaInput.addEventListener("keydown", (event: KeyboardEvent) => {
      if (event.key === "Enter") void this.submitEdit(formulaInput.value);
    });
    bar.appendChild(formulaInput);
    page.appendChild(bar);

    const main = this.el("div", { class: "main" });
    const table = this.el("table", { class: "grid", id: "grid" });
    renderGrid(table, this.client.displaySheet(), this.selection);
    table.addEventListener("click", (event: Event) => {
      const target = event.target as HTMLElement;
      const label = target?.dataset?.addr;
      if (label) {
        const addr = parseAddress(label);
        if (addr) {
          this.selection = addr;
          this.render();
        }
      }
    });
    const gridWrap = this.el("div", { class: "grid-wrap" });
    gridWrap.appendChild(table);
    main.appendChild(gridWrap);

    const side = this.el("div", { class: "sidebar" });
    side.appendChild(this.el("h2", {}, "online"));
    const users = this.el("ul", { id: "presence" });
    for (const name of this.client.activeUsers) {
      users.appendChild(this.el("li", {}, name));
    }
    side.appendChild(users);
    side.appendChild(this.el("h2", {}, "chat"));
    const chat = this.el("ul", { id: "chat" });
    for (const message of this.client.chat.slice(-50)) {
      chat.appendChild(this.el("li", {}, `${message.username}: ${message.text}`));
    }
    side.appendChild(chat);
    const chatInput = this.el("input", { id: "chat-input", placeholder: "say something" });
    chatInput.addEventListener("keydown", (event: KeyboardEvent) => {
      if (event.key === "Enter" && chatInput.value) {
        void this.client.sendChat(chatInput.value).catch(() => undefined);
        chatInput.value = "";
      }
    });
    side.appendChild(chatInput);
    main.appendChild(side);
    page.appendChild(main);
    page.appendChild(this.statusLine());
    this.root.appendChild(page);
  }

  async submitEdit(raw: string): Promise<void> {
    try {
      const command = editToCommand(this.selection, raw);
      await this.client.localEdit(command);
      this.status = `${this.client.author}/${this.client.group}`;
    } catch (err) {
      if (err instanceof CommandError) {
        this.status = err.message; // shown inline, nothing was sent
      } else if (err instanceof ApiError && !isConnectFailure(err)) {
        this.status = `${err.code}: ${err.message}`;
      }
    }
    this.render();
  }

  // --- polling ----------------------------------------------------------------

  startPolling(): void {
    this.stopPolling();
    this.stopped = false;
    this.scheduleNextPoll(this.pollIntervalMs);
  }

  stopPolling(): void {
    this.stopped = true;
    if (this.pollTimer !== null) clearTimeout(this.pollTimer);
    this.pollTimer = null;
  }

  private scheduleNextPoll(delayMs: number): void {
    if (this.stopped) return;
    this.pollTimer = setTimeout(() => void this.pollNow(), delayMs);
  }

  async pollNow(): Promise<void> {
    if (this.pollInFlight || this.view !== "sheet") {
      this.scheduleNextPoll(this.pollIntervalMs);
      return;
    }
    this.pollInFlight = true;
    try {
      const ok = await this.client.pollOnce();
      const wasReconnecting = this.reconnecting;
      this.reconnecting = !ok;
      if (ok || wasReconnecting !== this.reconnecting) this.render();
    } catch (err) {
      this.status = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      this.render();
    } finally {
      this.pollInFlight = false;
      this.scheduleNextPoll(this.pollIntervalMs);
    }
  }
}
