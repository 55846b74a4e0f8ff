import type { TreeNode } from "./types.js";

// Draws the serialized plan tree exactly as the server expanded it; the
// client never re-derives structure. Non-primitive nodes collapse on click.
export function renderTree(container: HTMLElement, tree: TreeNode | null): void {
  container.textContent = "";
  if (tree === null) {
    const hint = document.createElement("p");
    hint.className = "hint";
    hint.textContent = "Pick a learned task to see its plan.";
    container.appendChild(hint);
    return;
  }
  container.appendChild(renderNode(tree));
}

function renderNode(node: TreeNode): HTMLElement {
  const item = document.createElement("div");
  item.className = node.primitive ? "node primitive" : "node learned";

  const label = document.createElement("span");
  label.className = "label";
  label.textContent = node.action;
  item.appendChild(label);

  if (node.children.length > 0) {
    const toggle = document.createElement("button");
    toggle.type = "button";
    toggle.className = "toggle";
    toggle.textContent = "−";
    item.insertBefore(toggle, label);

    const branch = document.createElement("div");
    branch.className = "branch";
    for (const child of node.children) {
      branch.appendChild(renderNode(child));
    }
    item.appendChild(branch);

    toggle.addEventListener("click", () => {
      const hidden = branch.classList.toggle("collapsed");
      toggle.textContent = hidden ? "+" : "−";
    });
  }
  return item;
}
