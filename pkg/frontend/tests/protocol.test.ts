import { describe, expect, it } from "vitest";

import {
  BridgeConnection,
  Envelope,
  isEnvelope,
  parseFrame,
  publishFrame,
  SocketLike,
  subscribeFrame,
} from "../src/protocol";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  emit(frame: unknown): void {
    this.onmessage?.({ data: JSON.stringify(frame) });
  }
}

describe("frame builders", () => {
  it("builds subscribe frames", () => {
    expect(JSON.parse(subscribeFrame(["/skeleton"]))).toEqual({
      op: "subscribe",
      topics: ["/skeleton"],
    });
  });

  it("builds publish frames", () => {
    const frame = JSON.parse(publishFrame("/skeleton", { t: 1 }));
    expect(frame).toEqual({ op: "publish", topic: "/skeleton", payload: { t: 1 } });
  });

  it("distinguishes envelopes from control replies", () => {
    expect(isEnvelope({ topic: "/x", seq: 1, t: 0, payload: {} })).toBe(true);
    expect(isEnvelope({ ok: "subscribed" })).toBe(false);
    expect(isEnvelope({ error: "nope" })).toBe(false);
  });

  it("rejects non-object frames", () => {
    expect(() => parseFrame("42")).toThrow();
    expect(() => parseFrame("null")).toThrow();
  });
});

describe("BridgeConnection", () => {
  function connect() {
    const socket = new FakeSocket();
    const envelopes: Envelope[] = [];
    const statuses: boolean[] = [];
    const errors: string[] = [];
    const bridge = new BridgeConnection("ws://test/ws", {
      onEnvelope: (env) => envelopes.push(env),
      onStatus: (ok) => statuses.push(ok),
      onError: (message) => errors.push(message),
    }, () => socket);
    return { socket, bridge, envelopes, statuses, errors };
  }

  it("resubscribes on open and dispatches envelopes", () => {
    const { socket, bridge, envelopes, statuses } = connect();
    bridge.subscribe(["/gripper/pose"]);
    bridge.open();
    socket.onopen?.();
    expect(statuses).toEqual([true]);
    expect(JSON.parse(socket.sent[0])).toEqual({
      op: "subscribe",
      topics: ["/gripper/pose"],
    });
    const env = { topic: "/gripper/pose", seq: 3, t: 1.5,
                  payload: { pos: [0.1, 0.2, 0.3] } };
    socket.emit(env);
    expect(envelopes).toEqual([env]);
  });

  it("reports control errors without treating them as envelopes", () => {
    const { socket, bridge, envelopes, errors } = connect();
    bridge.open();
    socket.onopen?.();
    socket.emit({ error: "topic '/bogus' is not registered" });
    expect(envelopes).toHaveLength(0);
    expect(errors[0]).toMatch(/not registered/);
  });

  it("publish fails cleanly when disconnected", () => {
    const { bridge } = connect();
    expect(bridge.publish("/skeleton", { t: 0 })).toBe(false);
  });

  it("signals disconnect", () => {
    const { socket, bridge, statuses } = connect();
    bridge.open();
    socket.onopen?.();
    socket.close();
    expect(statuses).toEqual([true, false]);
    expect(bridge.connected).toBe(false);
  });

  it("survives unparseable frames", () => {
    const { socket, bridge, errors } = connect();
    bridge.open();
    socket.onopen?.();
    socket.onmessage?.({ data: "{nope" });
    expect(errors).toHaveLength(1);
  });
});
