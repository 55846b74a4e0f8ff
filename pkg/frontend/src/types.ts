// Wire shapes, copied from the dialog service's JSON bodies.

export type ReplyKind = "question" | "task_learned" | "steps_accepted" | "error";

export interface ReplyFields {
  kind: ReplyKind;
  text: string;
  question_about: string | null;
  learned: string[];
  steps: string[];
  error_kind: string | null;
}

export interface TranscriptLine {
  speaker: string;
  text: string;
}

export interface SessionView {
  session_id: string;
  phase: "awaiting_command" | "awaiting_definition";
  pending_question: string | null;
  transcript: TranscriptLine[];
}

export interface SubmitResult {
  reply: ReplyFields;
  phase: SessionView["phase"];
  pending_question: string | null;
}

export interface UtteranceEvent {
  seq: number;
  type: "utterance";
  text: string;
}

export type ReplyEvent = { seq: number; type: "reply" } & ReplyFields;

export interface LibraryUpdatedEvent {
  seq: number;
  type: "library_updated";
  learned: string[];
  revision: number;
}

export type SessionEvent = UtteranceEvent | ReplyEvent | LibraryUpdatedEvent;

export interface DefinitionDoc {
  name: string;
  arity: number;
  params: string[];
  body?: unknown[];
  provenance?: { utterance: string; timestamp: string } | null;
}

export interface LibraryDoc {
  format: string;
  version: number;
  primitives: DefinitionDoc[];
  learned: DefinitionDoc[];
}

export interface LibraryResponse {
  revision: number;
  library: LibraryDoc;
}

export interface TreeNode {
  action: string;
  name: string;
  args: string[];
  primitive: boolean;
  children: TreeNode[];
}
