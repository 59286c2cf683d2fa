// Wire client for the examination service: JSON envelopes over WebSocket.
// Framing is the transport's (one text message per envelope); correlation is
// by the `id` field, chosen here and echoed by the server.

export const PROTOCOL_VERSION = 1;

export interface Envelope {
  v: number;
  id: string;
  type: string;
  body: Record<string, unknown>;
}

export class ServerError extends Error {
  readonly code: string;
  readonly requestId: string;

  constructor(code: string, message: string, requestId: string) {
    super(message);
    this.name = 'ServerError';
    this.code = code;
    this.requestId = requestId;
  }
}

/** The slice of WebSocket the client needs; injectable for tests. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onopen: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  readyState?: number;
}

export function parseEnvelope(text: string): Envelope {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    throw new Error(`not JSON: ${text.slice(0, 80)}`);
  }
  if (typeof raw !== 'object' || raw === null || Array.isArray(raw)) {
    throw new Error('envelope must be a JSON object');
  }
  const env = raw as Record<string, unknown>;
  if (env.v !== PROTOCOL_VERSION) throw new Error(`unsupported protocol version ${env.v}`);
  if (typeof env.id !== 'string') throw new Error("envelope 'id' must be a string");
  if (typeof env.type !== 'string' || !env.type) throw new Error("envelope 'type' must be a string");
  if (env.id === '' && env.type !== 'error') {
    throw new Error("envelope 'id' may only be empty on errors");
  }
  const body = env.body ?? {};
  if (typeof body !== 'object' || Array.isArray(body)) throw new Error("envelope 'body' must be an object");
  return { v: PROTOCOL_VERSION, id: env.id, type: env.type, body: body as Record<string, unknown> };
}

export function serializeEnvelope(env: Envelope): string {
  return JSON.stringify({ v: env.v, id: env.id, type: env.type, body: env.body });
}

interface Pending {
  resolve: (env: Envelope) => void;
  reject: (err: Error) => void;
  onceKey?: string;
}

export type StatusListener = (connected: boolean) => void;

/**
 * Request/response client. One promise per request id; error envelopes
 * reject with ServerError. Un-correlatable server errors (empty id) go to
 * `onStrayError`.
 */
export class WireClient {
  private socket: SocketLike;
  private pending = new Map<string, Pending>();
  private onceInFlight = new Map<string, Promise<Envelope>>();
  private counter = 0;
  private readonly tag: string;
  onStrayError: ((code: string, message: string) => void) | null = null;
  onStatus: StatusListener | null = null;

  constructor(socket: SocketLike, tag?: string) {
    this.socket = socket;
    this.tag = tag ?? Math.random().toString(36).slice(2, 8);
    this.attach(socket);
  }

  private attach(socket: SocketLike): void {
    socket.onmessage = (ev) => this.dispatch(String(ev.data));
    socket.onclose = () => this.failAll(new Error('connection closed'));
    socket.onerror = () => undefined; // close always follows
  }

  /** Swap in a fresh socket after a reconnect; pending requests were failed at close. */
  reconnect(socket: SocketLike): void {
    this.socket = socket;
    this.attach(socket);
    this.onStatus?.(true);
  }

  nextId(): string {
    this.counter += 1;
    return `v-${this.tag}-${this.counter.toString(36).padStart(5, '0')}`;
  }

  request(type: string, body: Record<string, unknown> = {}): Promise<Envelope> {
    const id = this.nextId();
    const env: Envelope = { v: PROTOCOL_VERSION, id, type, body };
    const promise = new Promise<Envelope>((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
    });
    this.socket.send(serializeEnvelope(env));
    return promise;
  }

  /**
   * Deduplicated request: while a request for `key` is in flight, further
   * calls return the same promise instead of sending again. Guards mutating
   * UI actions against double-clicks.
   */
  requestOnce(key: string, type: string, body: Record<string, unknown> = {}): Promise<Envelope> {
    const existing = this.onceInFlight.get(key);
    if (existing) return existing;
    const promise = this.request(type, body).finally(() => {
      this.onceInFlight.delete(key);
    });
    this.onceInFlight.set(key, promise);
    return promise;
  }

  get inFlight(): number {
    return this.pending.size;
  }

  close(): void {
    this.socket.close();
  }

  private dispatch(text: string): void {
    let env: Envelope;
    try {
      env = parseEnvelope(text);
    } catch (err) {
      this.onStrayError?.('parse_error', String(err));
      return;
    }
    if (env.type === 'error' && env.id === '') {
      this.onStrayError?.(String(env.body.code ?? 'unknown'), String(env.body.message ?? ''));
      return;
    }
    const waiter = this.pending.get(env.id);
    if (!waiter) {
      // response to a request we no longer track (e.g. after reconnect)
      return;
    }
    this.pending.delete(env.id);
    if (env.type === 'error') {
      waiter.reject(new ServerError(String(env.body.code ?? 'internal'), String(env.body.message ?? ''), env.id));
    } else {
      waiter.resolve(env);
    }
  }

  private failAll(err: Error): void {
    const waiters = [...this.pending.values()];
    this.pending.clear();
    this.onceInFlight.clear();
    for (const w of waiters) w.reject(err);
    this.onStatus?.(false);
  }
}

/** Exponential backoff schedule for reconnect attempts, capped. */
export function backoffDelays(baseMs = 500, capMs = 15000): (attempt: number) => number {
  return (attempt: number) => Math.min(capMs, baseMs * 2 ** Math.max(0, attempt));
}
