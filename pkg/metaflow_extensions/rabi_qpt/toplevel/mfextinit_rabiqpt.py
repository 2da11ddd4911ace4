toplevel = "rabiqpt_toplevel"
