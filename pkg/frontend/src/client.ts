/** Minimal HTTP client for the gateway wire protocol. */

import {
  CardViewPayload,
  DeltaPayload,
  Message,
  StateViewPayload,
  isCardView,
  isStateView,
  makeMessage,
} from "./protocol.js";

export class GatewayClient {
  constructor(
    readonly baseUrl: string,
    readonly sessionId: string,
  ) {}

  async createSession(csv?: string): Promise<void> {
    const resp = await fetch(`${this.baseUrl}/v1/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ session_id: this.sessionId, csv: csv ?? null }),
    });
    if (!resp.ok) throw new Error(`createSession failed: ${resp.status}`);
  }

  private async send(msg: Message<unknown>): Promise<Message[]> {
    const resp = await fetch(`${this.baseUrl}/v1/message`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(msg),
    });
    if (!resp.ok) throw new Error(`message failed: ${resp.status}`);
    const body = (await resp.json()) as { messages: Message[] };
    return body.messages;
  }

  async utterance(text: string): Promise<Message[]> {
    return this.send(makeMessage("Utterance", this.sessionId, { text }));
  }

  async delta(payload: DeltaPayload): Promise<Message[]> {
    return this.send(makeMessage("Delta", this.sessionId, payload));
  }

  async snapshot(): Promise<string> {
    const resp = await fetch(`${this.baseUrl}/v1/sessions/${this.sessionId}/snapshot`);
    if (!resp.ok) throw new Error(`snapshot failed: ${resp.status}`);
    return resp.text();
  }

  static stateViews(messages: Message[]): Message<StateViewPayload>[] {
    return messages.filter(isStateView);
  }

  static cardViews(messages: Message[]): Message<CardViewPayload>[] {
    return messages.filter(isCardView);
  }
}
