// Client state machine over the wire: confirmed replay + optimistic pending,
// echo suppression by (origin, command text, FIFO), one poll in flight.

import { RpcApi, isConnectFailure } from "./api.js";
import { applyCommand, parseCommand, serializeCommand, Command } from "./commands.js";
import { recalculate } from "./formula.js";
import { SheetData, cloneSheet, parseSaveString } from "./sheet.js";

export interface ChatMessage {
  chat_seq: number;
  username: string;
  text: string;
  ts: number;
}

interface Pending {
  text: string;
  command: Command;
  sent: boolean;
}

export class SheetClient {
  session = "";
  username = "";
  origin = "";
  author = "";
  group = "";
  confirmed: SheetData = { name: "sheet", cells: new Map() };
  confirmedSeq = 0;
  pending: Pending[] = [];
  chat: ChatMessage[] = [];
  chatSeq = 0;
  activeUsers: string[] = [];

  constructor(public api: RpcApi) {}

  async register(username: string, password: string): Promise<void> {
    await this.api.call("create_account", "", { username, password });
  }

  async login(username: string, password: string): Promise<void> {
    const out = await this.api.call("login", "", { username, password });
    this.session = out.token;
    this.username = out.username;
  }

  async updateAccount(newUsername?: string, newPassword?: string): Promise<void> {
    const params: Record<string, unknown> = {};
    if (newUsername) params.new_username = newUsername;
    if (newPassword) params.new_password = newPassword;
    const out = await this.api.call("update_account", this.session, params);
    this.username = out.username;
  }

  async createSheet(group: string, secret: string): Promise<void> {
    await this.api.call("create_sheet", this.session, { group, secret });
  }

  async open(author: string, group: string, secret: string): Promise<void> {
    const out = await this.api.call("open_sheet", this.session, { author, group, secret });
    this.author = author;
    this.group = group;
    this.origin = out.origin;
    this.confirmed = parseSaveString(out.snapshot);
    recalculate(this.confirmed);
    this.confirmedSeq = out.last_seq;
    this.pending = [];
    this.chat = [];
    this.chatSeq = 0;
  }

  private sheetParams(): Record<string, unknown> {
    return { author: this.author, group: this.group };
  }

  /** Stage an edit optimistically and try to transmit; safe to call offline. */
  async localEdit(command: Command): Promise<void> {
    this.pending.push({ text: serializeCommand(command), command, sent: false });
    await this.flushPending();
  }

  private async flushPending(): Promise<void> {
    const unsent = this.pending.filter((p) => !p.sent);
    if (!unsent.length) return;
    try {
      await this.api.call("send_commands", this.session, {
        ...this.sheetParams(),
        commands: unsent.map((p) => p.text),
      });
      for (const entry of unsent) entry.sent = true;
    } catch (err) {
      if (!isConnectFailure(err)) throw err; // app errors surface to the UI
    }
  }

  /**
   * One poll tick: retry unsent edits, then pull commands + chat + presence.
   * Returns false (state untouched) when the server is unreachable.
   */
  async pollOnce(): Promise<boolean> {
    await this.flushPending();
    let feed: any;
    let chat: any;
    let active: any;
    try {
      feed = await this.api.call("poll_changes", this.session, {
        ...this.sheetParams(),
        since_seq: this.confirmedSeq,
      });
      chat = await this.api.call("poll_chat", this.session, {
        ...this.sheetParams(),
        since_chat_seq: this.chatSeq,
      });
      active = await this.api.call("list_active", this.session, this.sheetParams());
    } catch (err) {
      if (isConnectFailure(err)) return false;
      throw err;
    }
    for (const envelope of feed.envelopes) {
      const command = parseCommand(envelope.command);
      applyCommand(this.confirmed, command);
      this.confirmedSeq = envelope.seq;
      if (envelope.origin === this.origin && this.pending.length
          && this.pending[0].text === envelope.command) {
        this.pending.shift(); // own edit echoed back
      }
    }
    if (feed.envelopes.length) recalculate(this.confirmed);
    for (const message of chat.messages) {
      this.chat.push(message);
      this.chatSeq = message.chat_seq;
    }
    this.activeUsers = active.users;
    return true;
  }

  async sendChat(text: string): Promise<void> {
    await this.api.call("send_chat", this.session, { ...this.sheetParams(), text });
  }

  /** confirmed ++ pending, recalculated; pure view, no network. */
  displaySheet(): SheetData {
    if (!this.pending.length) return this.confirmed;
    const shadow = cloneSheet(this.confirmed);
    for (const entry of this.pending) applyCommand(shadow, entry.command);
    recalculate(shadow);
    return shadow;
  }
}
