import type { SessionStore } from "./state.js";
import type { DefinitionDoc } from "./types.js";

// Library pane: every known action with its arity, learned tasks above the
// innate primitives. Clicking a row selects that task for the tree view.
export function mountLibrary(
  root: HTMLElement,
  store: SessionStore,
  onSelect: (definition: DefinitionDoc) => void,
): void {
  const list = root.querySelector(".library-list") as HTMLElement;
  const revisionBadge = root.querySelector(".revision") as HTMLElement;

  function row(definition: DefinitionDoc, cls: string): HTMLElement {
    const item = document.createElement("li");
    item.className = cls;
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = `${definition.name}/${definition.arity}`;
    if (
      store.selectedTask &&
      store.selectedTask.name === definition.name &&
      store.selectedTask.arity === definition.arity
    ) {
      item.classList.add("selected");
    }
    button.addEventListener("click", () => onSelect(definition));
    item.appendChild(button);
    return item;
  }

  function render(): void {
    list.textContent = "";
    if (store.library === null) {
      return;
    }
    revisionBadge.textContent = `rev ${store.library.revision}`;
    for (const definition of store.library.library.learned) {
      list.appendChild(row(definition, "learned"));
    }
    for (const definition of store.library.library.primitives) {
      list.appendChild(row(definition, "primitive"));
    }
  }

  store.subscribe(render);
  render();
}
