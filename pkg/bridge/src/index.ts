import { createApp } from "./server";

const port = Number(process.env.PORT ?? 8787);
const app = createApp();
app.listen(port, () => {
  // the startup line doubles as the readiness probe for supervisors
  console.log(`advisor bridge listening on :${port}`);
});
