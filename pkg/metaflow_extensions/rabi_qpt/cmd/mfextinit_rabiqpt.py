CMDS_DESC = [("rabi", ".rabi.rabi_cmd.cli")]
