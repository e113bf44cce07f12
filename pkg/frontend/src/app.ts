// Chat application wiring: form handling, single in-flight question,
// session persistence, settings drawer, MCQ options editor.

import { ApiError, NetworkError, askService } from "./api.js";
import { renderMessage, renderPendingIndicator, renderRetryBubble } from "./render.js";
import { KeyValueStore, SessionStore, pickStore } from "./storage.js";
import { ChatMessage, PromptKind, toCitation } from "./types.js";

export interface AppHandles {
  root: HTMLElement;
  sendQuestion(text: string, kind: PromptKind, options?: string[]): Promise<void>;
  messages(): ChatMessage[];
  clearSession(): void;
}

export function createApp(
  root: HTMLElement,
  store?: KeyValueStore | null,
  fetchImpl?: typeof fetch,
): AppHandles {
  const session = new SessionStore(pickStore(store));
  let settings = session.loadSettings();
  let history: ChatMessage[] = session.load();
  let inFlight = false;

  root.innerHTML = `
    <header>
      <h1>Standards Chat</h1>
      <button type="button" id="settings-toggle" aria-expanded="false">Settings</button>
    </header>
    <section id="settings" class="drawer" hidden>
      <label>Service URL
        <input type="text" id="service-url" placeholder="same origin" />
      </label>
      <label>Top K sources
        <input type="number" id="top-k" min="1" placeholder="service default" />
      </label>
      <button type="button" id="clear-session">Clear session</button>
    </section>
    <main id="transcript" aria-live="polite"></main>
    <form id="ask-form">
      <label class="mcq-toggle"><input type="checkbox" id="mcq-mode" /> MCQ mode</label>
      <textarea id="mcq-options" hidden placeholder="one option per line"></textarea>
      <div class="ask-row">
        <input type="text" id="question" autocomplete="off" placeholder="Ask about the standards corpus" />
        <button type="submit" id="send" disabled>Send</button>
      </div>
    </form>
  `;

  const transcript = root.querySelector<HTMLElement>("#transcript")!;
  const form = root.querySelector<HTMLFormElement>("#ask-form")!;
  const questionInput = root.querySelector<HTMLInputElement>("#question")!;
  const sendButton = root.querySelector<HTMLButtonElement>("#send")!;
  const mcqToggle = root.querySelector<HTMLInputElement>("#mcq-mode")!;
  const mcqOptions = root.querySelector<HTMLTextAreaElement>("#mcq-options")!;
  const settingsToggle = root.querySelector<HTMLButtonElement>("#settings-toggle")!;
  const settingsDrawer = root.querySelector<HTMLElement>("#settings")!;
  const serviceUrlInput = root.querySelector<HTMLInputElement>("#service-url")!;
  const topKInput = root.querySelector<HTMLInputElement>("#top-k")!;
  const clearButton = root.querySelector<HTMLButtonElement>("#clear-session")!;

  serviceUrlInput.value = settings.serviceUrl;
  topKInput.value = settings.topK === null ? "" : String(settings.topK);

  function refreshSendState(): void {
    sendButton.disabled = inFlight || questionInput.value.trim() === "";
  }

  function appendToTranscript(message: ChatMessage): void {
    history.push(message);
    session.save(history);
    transcript.appendChild(renderMessage(message));
    transcript.scrollTop = transcript.scrollHeight;
  }

  function redraw(): void {
    transcript.innerHTML = "";
    for (const message of history) {
      transcript.appendChild(renderMessage(message));
    }
  }

  async function sendQuestion(
    text: string,
    kind: PromptKind = "open_ended",
    options?: string[],
  ): Promise<void> {
    const question = text.trim();
    if (question === "" || inFlight) {
      return;
    }
    inFlight = true;
    refreshSendState();
    appendToTranscript({ role: "user", text: question, timestamp: new Date().toISOString() });
    const pending = renderPendingIndicator();
    transcript.appendChild(pending);
    try {
      const response = await askService(settings.serviceUrl, question, {
        kind,
        options,
        topK: settings.topK,
        fetchImpl,
      });
      appendToTranscript({
        role: "assistant",
        text: response.answer,
        sources: response.sources.map(toCitation),
        timestamp: new Date().toISOString(),
      });
    } catch (error) {
      if (error instanceof ApiError) {
        appendToTranscript({
          role: "assistant",
          text:
            error.code === "llm_unconfigured"
              ? "No answer model is configured; showing retrieved sources only."
              : error.message,
          sources: error.sources.map(toCitation),
          errorCode: error.code,
          timestamp: new Date().toISOString(),
        });
      } else if (error instanceof NetworkError) {
        transcript.appendChild(
          renderRetryBubble(() => {
            void sendQuestion(question, kind, options);
          }),
        );
      } else {
        throw error;
      }
    } finally {
      pending.remove();
      inFlight = false;
      refreshSendState();
    }
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const kind: PromptKind = mcqToggle.checked ? "mcq" : "open_ended";
    const options = mcqToggle.checked
      ? mcqOptions.value.split("\n").map((line) => line.trim()).filter((line) => line !== "")
      : undefined;
    const text = questionInput.value;
    questionInput.value = "";
    refreshSendState();
    void sendQuestion(text, kind, options);
  });

  questionInput.addEventListener("input", refreshSendState);
  mcqToggle.addEventListener("change", () => {
    mcqOptions.hidden = !mcqToggle.checked;
  });
  settingsToggle.addEventListener("click", () => {
    const open = settingsDrawer.hidden;
    settingsDrawer.hidden = !open;
    settingsToggle.setAttribute("aria-expanded", String(open));
  });
  serviceUrlInput.addEventListener("change", () => {
    settings = { ...settings, serviceUrl: serviceUrlInput.value.trim().replace(/\/+$/, "") };
    session.saveSettings(settings);
  });
  topKInput.addEventListener("change", () => {
    const parsed = Number(topKInput.value);
    settings = { ...settings, topK: Number.isInteger(parsed) && parsed >= 1 ? parsed : null };
    session.saveSettings(settings);
  });
  clearButton.addEventListener("click", () => {
    history = [];
    session.clear();
    redraw();
  });

  redraw();
  refreshSendState();

  return {
    root,
    sendQuestion,
    messages: () => [...history],
    clearSession: () => {
      history = [];
      session.clear();
      redraw();
    },
  };
}
