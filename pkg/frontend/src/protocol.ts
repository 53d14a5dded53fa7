/**
 * Wire protocol for the service's browser socket bridge.
 *
 * The bridge speaks JSON text messages. Client -> server frames are
 * {op: "subscribe", topics} or {op: "publish", topic, payload}; server ->
 * client frames are either control replies ({ok} / {error}) or plain
 * topic envelopes {topic, seq, t, payload}.
 */

export interface Envelope {
  topic: string;
  seq: number;
  t: number;
  payload: unknown;
}

export interface ControlReply {
  ok?: string;
  error?: string;
  topics?: string[];
  seq?: number;
}

export type BridgeFrame = Envelope | ControlReply;

export const TOPIC_SKELETON = "/skeleton";
export const TOPIC_GRIPPER_POSE = "/gripper/pose";
export const TOPIC_GRIPPER_STATE = "/gripper/state";
export const TOPIC_HAND_IMAGE = "/hand_image";
export const TOPIC_CALIBRATION_EVENT = "/calibration/event";
export const TOPIC_HAND_OVERRIDE = "/hand/override";

export function subscribeFrame(topics: string[]): string {
  return JSON.stringify({ op: "subscribe", topics });
}

export function publishFrame(topic: string, payload: unknown): string {
  return JSON.stringify({ op: "publish", topic, payload });
}

export function isEnvelope(frame: BridgeFrame): frame is Envelope {
  return (
    typeof (frame as Envelope).topic === "string" &&
    typeof (frame as Envelope).seq === "number" &&
    "payload" in frame
  );
}

export function parseFrame(data: string): BridgeFrame {
  const parsed = JSON.parse(data);
  if (parsed === null || typeof parsed !== "object") {
    throw new Error("bridge frame is not an object");
  }
  return parsed as BridgeFrame;
}

/** Minimal WebSocket surface so tests can inject a fake or `ws`. */
// eslint-disable-next-line @typescript-eslint/no-explicit-any
type SocketEvent = any; // browser Event / ws event objects both fit
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: SocketEvent) => void) | null;
  onclose: ((ev?: SocketEvent) => void) | null;
  onerror: ((ev?: SocketEvent) => void) | null;
  onmessage: ((ev: SocketEvent) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface BridgeCallbacks {
  onEnvelope?: (env: Envelope) => void;
  onStatus?: (connected: boolean) => void;
  onError?: (message: string) => void;
}

/** One socket connection to the bridge with auto-resubscribe on connect. */
export class BridgeConnection {
  private socket: SocketLike | null = null;
  private topics: string[] = [];
  connected = false;

  constructor(
    private readonly url: string,
    private readonly callbacks: BridgeCallbacks,
    private readonly socketFactory: SocketFactory,
  ) {}

  open(): void {
    const socket = this.socketFactory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.connected = true;
      if (this.topics.length > 0) {
        socket.send(subscribeFrame(this.topics));
      }
      this.callbacks.onStatus?.(true);
    };
    socket.onclose = () => {
      this.connected = false;
      this.callbacks.onStatus?.(false);
    };
    socket.onerror = () => {
      this.callbacks.onError?.("socket error");
    };
    socket.onmessage = (ev) => this.handleMessage(String(ev.data));
  }

  handleMessage(data: string): void {
    let frame: BridgeFrame;
    try {
      frame = parseFrame(data);
    } catch {
      this.callbacks.onError?.("unparseable bridge frame");
      return;
    }
    if (isEnvelope(frame)) {
      this.callbacks.onEnvelope?.(frame);
    } else if (frame.error) {
      this.callbacks.onError?.(frame.error);
    }
  }

  subscribe(topics: string[]): void {
    this.topics = topics;
    if (this.connected && this.socket) {
      this.socket.send(subscribeFrame(topics));
    }
  }

  publish(topic: string, payload: unknown): boolean {
    if (!this.connected || !this.socket) {
      return false;
    }
    this.socket.send(publishFrame(topic, payload));
    return true;
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
    this.connected = false;
  }
}
