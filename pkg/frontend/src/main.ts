/** Page wiring: renders the session onto index.html and forwards events. */

import { Client } from "./api.js";
import type { Choice } from "./api.js";
import { applyKey, Session } from "./state.js";

const STORAGE_KEY = "pvli-annotator-id";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

const screens = {
  login: byId<HTMLElement>("screen-login"),
  review: byId<HTMLElement>("screen-review"),
  done: byId<HTMLElement>("screen-done"),
  error: byId<HTMLElement>("screen-error"),
};

const annotatorInput = byId<HTMLInputElement>("annotator-id");
const startButton = byId<HTMLButtonElement>("start");
const loginError = byId<HTMLElement>("login-error");
const promptText = byId<HTMLElement>("prompt");
const imageRef = byId<HTMLElement>("image-ref");
const image = byId<HTMLImageElement>("premise-image");
const voteInfo = byId<HTMLElement>("vote-info");
const answeredInfo = byId<HTMLElement>("answered-info");
const invalidBox = byId<HTMLInputElement>("invalid-flag");
const submitButton = byId<HTMLButtonElement>("submit");
const errorText = byId<HTMLElement>("error-text");
const retryButton = byId<HTMLButtonElement>("retry");

const choiceButtons: Array<[Choice, HTMLButtonElement]> = [
  ["true", byId<HTMLButtonElement>("choice-true")],
  ["false", byId<HTMLButtonElement>("choice-false")],
  ["not_sure", byId<HTMLButtonElement>("choice-not-sure")],
];

const session = new Session(new Client());

function render(): void {
  for (const [name, el] of Object.entries(screens)) {
    el.hidden = name !== session.screen;
  }
  loginError.textContent = session.screen === "login" ? session.lastError : "";

  if (session.screen === "review" && session.unit !== null) {
    promptText.textContent = session.unit.prompt;
    imageRef.textContent = session.unit.image_ref;
    if (/^https?:/.test(session.unit.image_ref)) {
      image.src = session.unit.image_ref;
      image.hidden = false;
    } else {
      image.removeAttribute("src");
      image.hidden = true;
    }
    voteInfo.textContent =
      `vote ${session.unit.votes_recorded + 1} of ${session.unit.required_votes}`;
    answeredInfo.textContent = `answered this session: ${session.answered}`;
    for (const [choice, button] of choiceButtons) {
      button.classList.toggle("selected", session.selection.choice === choice);
    }
    invalidBox.checked = session.selection.invalid;
    submitButton.disabled = session.submitDisabled;
  }

  if (session.screen === "error") {
    errorText.textContent = session.lastError;
  }
}

session.onchange = render;

startButton.addEventListener("click", () => {
  void session.start(annotatorInput.value).then((ok) => {
    if (ok) sessionStorage.setItem(STORAGE_KEY, session.annotatorId);
  });
});
annotatorInput.addEventListener("keydown", (ev) => {
  if (ev.key === "Enter") startButton.click();
});

for (const [choice, button] of choiceButtons) {
  button.addEventListener("click", () => session.select(choice));
}
invalidBox.addEventListener("change", () => session.toggleInvalid());
submitButton.addEventListener("click", () => void session.submit());
retryButton.addEventListener("click", () => void session.retry());

document.addEventListener("keydown", (ev) => {
  if (session.screen !== "review") return;
  const target = ev.target as HTMLElement | null;
  if (target !== null && target.tagName === "INPUT") return;
  if (ev.key === "Enter") {
    void session.submit();
    return;
  }
  const next = applyKey(session.selection, ev.key);
  if (next !== null) {
    session.selection = next;
    render();
  }
});

const saved = sessionStorage.getItem(STORAGE_KEY);
if (saved !== null) annotatorInput.value = saved;
render();
