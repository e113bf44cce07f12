// Client-side session persistence with graceful storage degradation.

import { ChatMessage, DEFAULT_SETTINGS, Settings } from "./types.js";

const SESSION_KEY = "standrag.session.v1";
const SETTINGS_KEY = "standrag.settings.v1";

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

class MemoryStore implements KeyValueStore {
  private data = new Map<string, string>();
  getItem(key: string): string | null {
    return this.data.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.data.set(key, value);
  }
  removeItem(key: string): void {
    this.data.delete(key);
  }
}

/** localStorage when usable, otherwise an in-memory session-only store. */
export function pickStore(candidate?: KeyValueStore | null): KeyValueStore {
  const store = candidate ?? safeLocalStorage();
  if (store === null) {
    console.warn("browser storage unavailable; session will not survive reload");
    return new MemoryStore();
  }
  return store;
}

function safeLocalStorage(): KeyValueStore | null {
  try {
    const probe = "standrag.probe";
    window.localStorage.setItem(probe, "1");
    window.localStorage.removeItem(probe);
    return window.localStorage;
  } catch {
    return null;
  }
}

export class SessionStore {
  constructor(private readonly store: KeyValueStore) {}

  /** Ordered message history; a corrupted blob yields a fresh session. */
  load(): ChatMessage[] {
    const raw = this.store.getItem(SESSION_KEY);
    if (raw === null) {
      return [];
    }
    try {
      const parsed = JSON.parse(raw) as { messages?: unknown };
      if (!parsed || !Array.isArray(parsed.messages)) {
        throw new Error("missing messages array");
      }
      return parsed.messages.filter(isChatMessage);
    } catch (cause) {
      console.warn("discarding corrupted chat session:", cause);
      this.store.removeItem(SESSION_KEY);
      return [];
    }
  }

  save(messages: ChatMessage[]): void {
    this.store.setItem(SESSION_KEY, JSON.stringify({ messages }));
  }

  clear(): void {
    this.store.removeItem(SESSION_KEY);
  }

  loadSettings(): Settings {
    const raw = this.store.getItem(SETTINGS_KEY);
    if (raw === null) {
      return { ...DEFAULT_SETTINGS };
    }
    try {
      const parsed = JSON.parse(raw) as Partial<Settings>;
      return {
        serviceUrl: typeof parsed.serviceUrl === "string" ? parsed.serviceUrl : "",
        topK: typeof parsed.topK === "number" && parsed.topK >= 1 ? parsed.topK : null,
      };
    } catch {
      return { ...DEFAULT_SETTINGS };
    }
  }

  saveSettings(settings: Settings): void {
    this.store.setItem(SETTINGS_KEY, JSON.stringify(settings));
  }
}

function isChatMessage(value: unknown): value is ChatMessage {
  if (typeof value !== "object" || value === null) {
    return false;
  }
  const msg = value as Record<string, unknown>;
  return (
    (msg.role === "user" || msg.role === "assistant") &&
    typeof msg.text === "string" &&
    typeof msg.timestamp === "string" &&
    (msg.role === "assistant" || msg.sources === undefined)
  );
}
