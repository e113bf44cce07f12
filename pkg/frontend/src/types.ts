// Wire types for the retrieval service API and the client-side chat model.

export type PromptKind = "open_ended" | "mcq";

export interface SourceCitation {
  chunk_id: string;
  filename: string;
  heading_path: string[];
  score: number;
  content: string;
}

export interface ChatMessage {
  role: "user" | "assistant";
  text: string;
  /** Assistant messages only; exactly the service's sources, same order. */
  sources?: SourceCitation[];
  timestamp: string;
  /** Present on assistant messages produced by a degraded/error response. */
  errorCode?: string;
}

export interface ChatRequestBody {
  question: string;
  kind: PromptKind;
  options?: string[];
  top_k?: number;
}

export interface ChunkRecord {
  id: string;
  filename: string;
  heading_path: string[];
  content: string;
  score: number;
}

export interface ChatResponseBody {
  answer: string;
  kind: PromptKind;
  sources: ChunkRecord[];
}

export interface ErrorResponseBody {
  error: string;
  detail?: string;
  sources?: ChunkRecord[];
}

export interface Settings {
  serviceUrl: string;
  topK: number | null;
}

export const DEFAULT_SETTINGS: Settings = { serviceUrl: "", topK: null };

export function renderHeadingPath(path: string[]): string {
  return path.join(" > ");
}

export function toCitation(record: ChunkRecord): SourceCitation {
  return {
    chunk_id: record.id,
    filename: record.filename,
    heading_path: record.heading_path,
    score: record.score,
    content: record.content,
  };
}
