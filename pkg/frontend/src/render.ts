// DOM construction for chat bubbles and source citation cards.
// Citations are rendered exactly as received: same set, same order.

import { ChatMessage, SourceCitation, renderHeadingPath } from "./types.js";

export function renderMessage(message: ChatMessage): HTMLElement {
  const bubble = document.createElement("div");
  bubble.className = `message ${message.role}${message.errorCode ? " error" : ""}`;
  bubble.dataset.role = message.role;
  if (message.errorCode) {
    bubble.dataset.errorCode = message.errorCode;
    const code = document.createElement("span");
    code.className = "error-code";
    code.textContent = message.errorCode;
    bubble.appendChild(code);
  }
  const text = document.createElement("p");
  text.className = "text";
  text.textContent = message.text;
  bubble.appendChild(text);
  if (message.role === "assistant" && message.sources && message.sources.length > 0) {
    bubble.appendChild(renderSourcePanel(message.sources));
  }
  return bubble;
}

export function renderSourcePanel(sources: SourceCitation[]): HTMLElement {
  const panel = document.createElement("div");
  panel.className = "sources";
  const heading = document.createElement("div");
  heading.className = "sources-heading";
  heading.textContent = `Sources (${sources.length})`;
  panel.appendChild(heading);
  sources.forEach((source, index) => {
    panel.appendChild(renderCitation(source, index + 1));
  });
  return panel;
}

export function renderCitation(source: SourceCitation, position: number): HTMLElement {
  const card = document.createElement("details");
  card.className = "citation";
  card.dataset.chunkId = source.chunk_id;

  const summary = document.createElement("summary");
  const label = document.createElement("span");
  label.className = "citation-label";
  label.textContent = `[${position}] ${source.filename} | ${renderHeadingPath(source.heading_path)}`;
  const score = document.createElement("span");
  score.className = "citation-score";
  score.textContent = source.score.toFixed(4);
  summary.appendChild(label);
  summary.appendChild(score);
  card.appendChild(summary);

  const content = document.createElement("pre");
  content.className = "citation-content";
  content.textContent = source.content;
  card.appendChild(content);
  return card;
}

export function renderPendingIndicator(): HTMLElement {
  const bubble = document.createElement("div");
  bubble.className = "message assistant pending";
  bubble.textContent = "…";
  return bubble;
}

export function renderRetryBubble(onRetry: () => void): HTMLElement {
  const bubble = document.createElement("div");
  bubble.className = "message assistant error";
  bubble.dataset.errorCode = "network_error";
  const text = document.createElement("p");
  text.className = "text";
  text.textContent = "The service could not be reached.";
  bubble.appendChild(text);
  const retry = document.createElement("button");
  retry.className = "retry";
  retry.type = "button";
  retry.textContent = "Retry";
  retry.addEventListener("click", onRetry);
  bubble.appendChild(retry);
  return bubble;
}
